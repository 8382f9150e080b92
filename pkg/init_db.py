from vortexmf.core.config import settings
from vortexmf.db.database import init_db


def main():
    print(f"Creating run store tables at {settings.DATABASE_URL}...")
    init_db()
    print("Run store ready!")


if __name__ == "__main__":
    main()
