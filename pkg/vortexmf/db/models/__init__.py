from .run import RunRecord
