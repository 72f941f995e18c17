#!/usr/bin/env python3
"""Write the default experiment configuration as an editable JSON file.

    python scripts/make_config.py --out my_config.json
"""

import argparse

from mumt.harness import default_config

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="config.json", help="where to write the JSON")
    args = ap.parse_args()
    cfg = default_config()
    cfg.save(args.out)
    print(f"wrote {args.out} (config hash {cfg.config_hash()})")
