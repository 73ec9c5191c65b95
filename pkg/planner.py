#!/usr/bin/env python3
from bw_planner.cli import main

if __name__ == "__main__":
    main()
