import sys

from src import app


def main() -> None:
    sys.exit(app.run())


if __name__ == "__main__":
    main()
