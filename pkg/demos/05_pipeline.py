"""Running the whole pipeline from Python, the way the command line does.

Equivalent to

    henon-thermo pipeline --out henon_out
    henon-thermo report --out henon_out

with a small JSON config that shortens the orbit statistics. The report lists every
acceptance check with its measured values.
"""

import json
import os
import sys
import tempfile

from henon_thermo import cli

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="henon_")
config = os.path.join(out, "run.json")
os.makedirs(out, exist_ok=True)
with open(config, "w") as fh:
    json.dump({"orbit_length": 2 ** 18, "n_samples": 250, "clt_seeds": 20}, fh)

rc = cli.main(["pipeline", "--config", config, "--out", out])
print("pipeline exit code", rc)
rc = cli.main(["report", "--config", config, "--out", out])
print("report exit code", rc)

with open(os.path.join(out, "report.json")) as fh:
    rep = json.load(fh)["data"]
failed = [c["name"] for c in rep["criteria"] if not c["pass"]]
print("\nartifacts in", out)
print("failing criteria:", failed or "none")
