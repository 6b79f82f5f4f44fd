#!/usr/bin/env python3
"""
Startup script for the smart-pgsim command line
"""

import importlib.util
import sys
from pathlib import Path

REQUIRED_PACKAGES = ("numpy", "scipy", "pandas", "dotenv")
BUNDLED_CASES = ("case9.m", "case14.m")


def check_requirements():
    """Check if all requirements are met"""
    print("🔍 Checking requirements...")

    if sys.version_info < (3, 10):
        print("❌ Python 3.10 or higher is required!")
        print(f"   Current version: {sys.version}")
        return False

    missing = [name for name in REQUIRED_PACKAGES if importlib.util.find_spec(name) is None]
    if missing:
        print(f"❌ Missing packages: {', '.join(missing)}")
        print("   Install dependencies with: uv sync")
        return False

    cases = Path(__file__).parent / "grid" / "cases"
    absent = [name for name in BUNDLED_CASES if not (cases / name).exists()]
    if absent:
        print(f"❌ Bundled cases not found: {', '.join(absent)}")
        return False

    if not Path(".env").exists():
        print("⚠️ No .env file; using defaults (copy .example.env to .env to change them)")

    print("✅ All requirements met!")
    return True


def main():
    """Check the environment, then hand the arguments to the CLI"""
    if not check_requirements():
        print("\n📖 Setup Instructions:")
        print("1. Run: uv sync")
        print("2. Optionally copy .example.env to .env")
        print("3. Run: python start.py solve grid/cases/case9.m")
        sys.exit(1)

    from main import main as cli_main
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
