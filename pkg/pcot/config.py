import os
from pathlib import Path

from dotenv import load_dotenv

# --- File Path Setup ---
PACKAGE_DIR = Path(__file__).resolve().parent
PROMPTS_DIR = PACKAGE_DIR / "prompts"
DATA_DIR = PACKAGE_DIR / "data"
DEFAULT_MOCK_RULEBOOK = DATA_DIR / "mock_rulebook.yaml"

# Overridable per plan or with PCOT_CACHE_DIR
DEFAULT_CACHE_DIR = Path("cache")

# Results store layout inside a run's output directory
RESULTS_FILE = "results.jsonl"
STAGE1_FILE = "stage1.jsonl"
STATE_FILE = "state.json"
MANIFEST_FILE = "manifest.json"
FAILED_CELLS_LOG = "failed_cells.jsonl"

# --- LLM Configuration ---
TEMPERATURE = 0.0
DEFAULT_STAGE1_MAX_OUTPUT_TOKENS = 2048
DEFAULT_STAGE2_MAX_OUTPUT_TOKENS = 512
MAX_API_RETRIES = 3
API_RETRY_DELAY_SECONDS = 10  # doubled on every retry
REQUEST_TIMEOUT_SECONDS = 120
OPENAI_BASE_URL = "https://api.openai.com/v1"
ANTHROPIC_BASE_URL = "https://api.anthropic.com"
ANTHROPIC_VERSION = "2023-06-01"
DEEPINFRA_BASE_URL = "https://api.deepinfra.com/v1/openai"

# Credential env var per provider kind; Gemini keeps the LLM_API_KEY fallback
CREDENTIAL_ENV = {
    "openai-compatible": ("OPENAI_API_KEY",),
    "anthropic-compatible": ("ANTHROPIC_API_KEY",),
    "google-compatible": ("GEMINI_API_KEY", "LLM_API_KEY"),
}

# --- Concurrency Control ---
DEFAULT_PARALLELISM = 4
DEFAULT_REQUEST_BUDGET = 50_000

# --- Corpus ---
DEFAULT_SAMPLE_SIZE = 450
TEST_SET_SIZE_RANGE = (400, 500)
DEFAULT_SEED = 2025
POST_CUTOFF_EARLIEST = "2024-01-01"

# --- Statistics ---
DEFAULT_SIGNIFICANCE_LEVEL = 0.01
SIGNIFICANCE_LEVELS = (0.01, 0.05)
MCNEMAR_EXACT_BELOW = 25  # discordant pairs

# --- Model Matrix ---
# alias -> ModelSpec fields
MODEL_MATRIX = {
    "gpt-4o-mini": {
        "provider": "openai-compatible",
        "model_id": "gpt-4o-mini",
        "display_name": "GPT 4o Mini",
        "knowledge_cutoff": "2023-10-01",
    },
    "gemini-1.5-flash": {
        "provider": "google-compatible",
        "model_id": "gemini-1.5-flash",
        "display_name": "Gemini 1.5 Flash",
        "knowledge_cutoff": "2023-11-01",
    },
    "claude-3-haiku": {
        "provider": "anthropic-compatible",
        "model_id": "claude-3-haiku-20240307",
        "display_name": "Claude 3 Haiku",
        "knowledge_cutoff": "2023-08-01",
    },
    "llama-3.3-70b": {
        "provider": "openai-compatible",
        "model_id": "meta-llama/Llama-3.3-70B-Instruct-Turbo",
        "display_name": "Llama 3.3 70B",
        "knowledge_cutoff": "2023-12-01",
        "base_url": DEEPINFRA_BASE_URL,
        "api_key_env": "DEEPINFRA_API_KEY",
    },
    "llama-3.1-8b": {
        "provider": "openai-compatible",
        "model_id": "meta-llama/Meta-Llama-3.1-8B-Instruct",
        "display_name": "Llama 3.1 8B",
        "knowledge_cutoff": "2023-12-01",
        "base_url": DEEPINFRA_BASE_URL,
        "api_key_env": "DEEPINFRA_API_KEY",
    },
    "o1-mini": {
        "provider": "openai-compatible",
        "model_id": "o1-mini",
        "display_name": "o1-mini",
    },
    "o3-mini": {
        "provider": "openai-compatible",
        "model_id": "o3-mini",
        "display_name": "o3-mini",
    },
    "mock": {
        "provider": "mock",
        "model_id": "mock-analyst",
        "display_name": "Mock Analyst",
    },
}


def load_environment(dotenv_path: str | os.PathLike | None = None) -> None:
    """Loads provider credentials from a .env file without overriding the real environment."""
    load_dotenv(dotenv_path, override=False)


def cache_dir(override: str | os.PathLike | None = None) -> Path:
    if override:
        return Path(override)
    env_dir = os.getenv("PCOT_CACHE_DIR")
    return Path(env_dir) if env_dir else DEFAULT_CACHE_DIR


def credential_for(provider: str, api_key_env: str | None = None) -> str | None:
    names = (api_key_env,) if api_key_env else CREDENTIAL_ENV.get(provider, ())
    for name in names:
        value = os.getenv(name)
        if value:
            return value
    return None
