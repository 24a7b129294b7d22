# Item pipelines
#
# Training loops and the router hand every record (see mope/items.py) to the
# pipelines they were given. A pipeline is opened before the first record and
# closed after the last one; both pipelines here also work as context managers.

import csv
import logging
import os
import warnings
from datetime import datetime

import numpy as np

from mope.items import ClassifierItem, DecisionItem, EvalItem, FidelityItem, GateItem, LossItem

try:
    from database.models import SQLALCHEMY_AVAILABLE, Metric, Run, init_db
except ImportError:
    warnings.warn("Database module not found. Runs will not be recorded.")
    SQLALCHEMY_AVAILABLE = False

logger = logging.getLogger(__name__)


class CSVExportPipeline:
    """
    Pipeline for exporting items of one type to a CSV file
    """
    item_class = None

    def __init__(self, path, item_class=None):
        self.path = path
        self.item_class = item_class or self.item_class
        if self.item_class is None:
            raise ValueError("Please provide the item class whose rows this pipeline writes")
        self.file_handle = None
        self.csv_writer = None
        self.count = 0

    def open(self):
        directory = os.path.dirname(self.path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        self.file_handle = open(self.path, 'w', newline='', encoding='utf-8')
        self.csv_writer = csv.writer(self.file_handle, lineterminator='\n')

        # Write header row
        self.csv_writer.writerow(self.item_class.field_names())
        return self

    def close(self):
        if self.file_handle is not None:
            self.file_handle.close()
            self.file_handle = None
            logger.info("Wrote %d rows to %s", self.count, self.path)

    def process_item(self, item):
        if not isinstance(item, self.item_class):
            return item
        if self.csv_writer is None:
            raise RuntimeError(f"{type(self).__name__} used before open()")
        self.csv_writer.writerow([_cell(value) for value in item.as_row()])
        self.count += 1
        return item

    def __enter__(self):
        return self.open()

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False


def _cell(value):
    # repr round-trips floats exactly
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


class LossHistory(CSVExportPipeline):
    item_class = LossItem


class GateHistory(CSVExportPipeline):
    item_class = GateItem


class ClassifierHistory(CSVExportPipeline):
    item_class = ClassifierItem


class DecisionLog(CSVExportPipeline):
    item_class = DecisionItem


class EvalTable(CSVExportPipeline):
    item_class = EvalItem


class FidelityTable(CSVExportPipeline):
    item_class = FidelityItem


class DatabasePipeline:
    """
    Pipeline for recording a run and its evaluation metrics in runs.db
    """
    def __init__(self, out_dir, command, config=None, seed=None):
        self.out_dir = out_dir
        self.command = command
        self.config = config or {}
        self.seed = seed
        self.session = None
        self.run = None

    def open(self):
        if not SQLALCHEMY_AVAILABLE:
            logger.warning("SQLAlchemy is not available. Skipping run registry.")
            return self
        self.session = init_db(self.out_dir)()
        self.run = Run(self.command, self.config, seed=self.seed, out_dir=self.out_dir)
        self.session.add(self.run)
        self.session.commit()
        return self

    def process_item(self, item):
        if self.session is None:
            return item
        # Only evaluation and fidelity rows are metrics; histories live in CSV
        name = getattr(item, 'model', None) or getattr(item, 'route', None)
        if name is None:
            return item
        if hasattr(item, 'accuracy'):
            self.run.metrics.append(Metric(name=name, condition=item.condition, value=float(item.accuracy)))
        else:
            self.run.metrics.append(Metric(name=name, condition='psnr', value=float(item.psnr)))
        return item

    def close(self, status='finished'):
        if self.session is None:
            return
        self.run.status = status
        self.run.finished_at = datetime.now()
        self.session.commit()
        self.session.close()
        self.session = None

    def __enter__(self):
        return self.open()

    def __exit__(self, exc_type, exc, tb):
        self.close('failed' if exc_type else 'finished')
        return False
