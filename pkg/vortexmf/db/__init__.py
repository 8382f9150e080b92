from .database import SessionLocal, init_db
from .base import Base
