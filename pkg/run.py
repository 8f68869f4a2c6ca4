"""
Simple script to run the fusionpr command line.
"""
from fusionpr.main import main

if __name__ == "__main__":
    main()
