# main.py — OneDF v1
"""
Entry point.

  python main.py generate --out data
  python main.py train    --data data --out runs/full
  python main.py eval     --checkpoint runs/full/best.1df --data data
  python main.py track    data/test/seq_0000.synq --checkpoint runs/full/best.1df --out track.csv
  python main.py ablate   --data data --out runs/ablation
"""
import sys

from cli.commands import main

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
