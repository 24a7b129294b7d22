from database.models import DB_NAME, SQLALCHEMY_AVAILABLE, Base, Metric, Run, init_db

__all__ = ['Base', 'DB_NAME', 'Metric', 'Run', 'SQLALCHEMY_AVAILABLE', 'init_db']
