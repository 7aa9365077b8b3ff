"""
nikolskii-lb - main entry point for the CLI application
"""

import sys

import nikolskii_lb.bootstrap  # noqa: F401


def main():
    """Main entry point for nikolskii-lb"""
    try:
        from nikolskii_lb.cli.commands import cli
        cli(obj={})
    except KeyboardInterrupt:
        print("\n\nInterrupted; no report was written.", file=sys.stderr)
        sys.exit(130)
    except ImportError as e:
        print(f"❌ Import error: {e}", file=sys.stderr)
        print("🔧 Please make sure all dependencies are installed.", file=sys.stderr)
        sys.exit(3)


if __name__ == "__main__":
    main()
