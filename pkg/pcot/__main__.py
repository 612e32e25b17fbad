from pcot.cli import main

raise SystemExit(main())
