import os
import sys

# Tests import `src.floatlab.<module>`; make the repository root importable
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
