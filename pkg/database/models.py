import json
import os
import warnings
from datetime import datetime

try:
    from sqlalchemy import Column, DateTime, Float, ForeignKey, Integer, String, Text, create_engine
    from sqlalchemy.orm import declarative_base, relationship, sessionmaker
    SQLALCHEMY_AVAILABLE = True
except ImportError:
    warnings.warn("SQLAlchemy is not available. Runs will not be recorded in runs.db.")
    SQLALCHEMY_AVAILABLE = False

DB_NAME = "runs.db"

if SQLALCHEMY_AVAILABLE:
    Base = declarative_base()

    class Run(Base):
        __tablename__ = 'runs'

        id = Column(Integer, primary_key=True)
        command = Column(String(64), nullable=False)
        seed = Column(Integer)
        out_dir = Column(String(1024))
        config = Column(Text)
        status = Column(String(16), default='running')
        started_at = Column(DateTime, default=datetime.now)
        finished_at = Column(DateTime)

        metrics = relationship('Metric', back_populates='run', cascade='all, delete-orphan')

        def __init__(self, command, config=None, **kwargs):
            self.command = command
            self.config = json.dumps(config or {}, sort_keys=True, default=str)
            for key, value in kwargs.items():
                if hasattr(self, key):
                    setattr(self, key, value)

        def __repr__(self):
            return f'<Run {self.id} {self.command} ({self.status})>'

    class Metric(Base):
        __tablename__ = 'metrics'

        id = Column(Integer, primary_key=True)
        run_id = Column(Integer, ForeignKey('runs.id'), nullable=False)
        name = Column(String(128), nullable=False)
        condition = Column(String(64))
        value = Column(Float)

        run = relationship('Run', back_populates='metrics')

        def __repr__(self):
            return f'<Metric {self.name}[{self.condition}] = {self.value}>'
else:
    # Placeholders so callers can still construct records when SQLAlchemy is missing
    Base = None

    class Run:
        def __init__(self, command, config=None, **kwargs):
            self.id = None
            self.command = command
            self.config = json.dumps(config or {}, sort_keys=True, default=str)
            self.status = kwargs.get('status', 'running')
            self.metrics = []

        def __repr__(self):
            return f'<Run {self.id} {self.command} ({self.status})>'

    class Metric:
        def __init__(self, name, condition=None, value=None, **kwargs):
            self.name = name
            self.condition = condition
            self.value = value


def init_db(out_dir):
    """Create `<out_dir>/runs.db` if needed and return a session factory, or None without SQLAlchemy."""
    if not SQLALCHEMY_AVAILABLE:
        return None
    os.makedirs(out_dir, exist_ok=True)
    engine = create_engine(f"sqlite:///{os.path.join(out_dir, DB_NAME)}")
    Base.metadata.create_all(bind=engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)
