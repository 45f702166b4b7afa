"""
start_dfm
~~~~~~~~~

Entry point of the ``dfm`` command-line tool.

Usage::

    python start_dfm.py estimate --config run.yaml --out out/
    python start_dfm.py simulate --params params.yaml --periods 200 --seed 7 --out data/

Exit status: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

import logging
import sys

from apps.dfm_app import app


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s %(message)s")
    sys.exit(app.run())
