"""Command-line checks: python3 cli_tests.py <frailtyfit binary> <schema dir> <case>."""

import atexit
import json
import math
import os
import shutil
import subprocess
import sys
import tempfile

import jsonschema

BIN, SCHEMAS, CASE = sys.argv[1], sys.argv[2], sys.argv[3]
WORK = tempfile.mkdtemp(prefix="frailtyfit_cli_")
atexit.register(shutil.rmtree, WORK, True)

SIM = ["--n", "60", "--size", "2", "--beta", "0.6931471805599453", "--baseline", "exp:1.0",
       "--censoring", "exp:0.1246"]


def run(*args, env=None):
    return subprocess.run([BIN, *args], capture_output=True, text=True, env=env)


def path(name):
    return os.path.join(WORK, name)


def schema(name):
    with open(os.path.join(SCHEMAS, name)) as f:
        return json.load(f)


def expect(cond, msg):
    if not cond:
        print("FAIL:", msg)
        sys.exit(1)


def simulate(out, seed="7", extra=("--theta", "2")):
    r = run("simulate", *SIM, "--seed", seed, "--output", out, *extra)
    expect(r.returncode == 0, f"simulate exited {r.returncode}: {r.stderr}")


def read_bytes(p):
    with open(p, "rb") as f:
        return f.read()


def case_fit_json():
    simulate(path("d.csv"))
    r = run("fit", "--input", path("d.csv"), "--frailty", "gamma", "--output", path("f.json"),
            "--hazard-output", path("h.csv"))
    expect(r.returncode == 0, f"fit exited {r.returncode}: {r.stderr}")
    with open(path("f.json")) as f:
        doc = json.load(f)
    jsonschema.validate(doc, schema("fit_output.schema.json"))
    expect(doc["convergence"]["converged"], "converged flag")
    names = doc["parameter_names"]
    expect(names == ["z1", "theta"], f"names {names}")
    for i, n in enumerate(names):
        se = doc["std_errors"][n]
        expect(se is not None and math.isfinite(se) and se > 0, f"std_error {n}")
        expect(abs(se - math.sqrt(doc["covariance"][i][i])) <= 1e-15 * se, f"se^2 = cov diagonal for {n}")
    expect(len(doc["hazard_knots"]) == len(doc["hazard_cumulative"]) == doc["data"]["event_times"],
           "hazard lengths")
    with open(path("h.csv")) as f:
        lines = f.read().splitlines()
    expect(lines[0] == "time,cumulative_hazard", "hazard header")
    expect(len(lines) - 1 == len(doc["hazard_knots"]), "hazard rows")
    expect(float(lines[-1].split(",")[1]) == doc["hazard_cumulative"][-1], "hazard CSV round trip")


def case_fit_csv():
    simulate(path("d.csv"))
    r = run("fit", "--input", path("d.csv"), "--format", "csv")
    expect(r.returncode == 0, f"fit exited {r.returncode}: {r.stderr}")
    lines = r.stdout.splitlines()
    expect(lines[0] == "name,estimate,std_error", "header")
    expect([l.split(",")[0] for l in lines[1:]] == ["z1", "theta"], "rows")


def case_malformed_csv():
    with open(path("bad.csv"), "w") as f:
        f.write("cluster,time,status,z1\n1,1.0,1,0\n2,oops,1,1\n")
    r = run("fit", "--input", path("bad.csv"))
    expect(r.returncode == 1, f"exit {r.returncode}")
    expect("bad.csv" in r.stderr and "line 3" in r.stderr, f"message names file and line: {r.stderr}")
    r = run("fit", "--input", path("missing.csv"))
    expect(r.returncode == 1, f"missing file exit {r.returncode}")


def case_max_iter():
    simulate(path("d.csv"))
    r = run("fit", "--input", path("d.csv"), "--max-iter", "1", "--output", path("f.json"))
    expect(r.returncode == 2, f"exit {r.returncode}")
    with open(path("f.json")) as f:
        doc = json.load(f)
    jsonschema.validate(doc, schema("fit_output.schema.json"))
    expect(doc["convergence"]["converged"] is False, "converged=false")
    expect(doc["std_errors"] is None, "no standard errors on a partial fit")


def case_simulate_deterministic():
    simulate(path("a.csv"), "11")
    simulate(path("b.csv"), "11")
    simulate(path("c.csv"), "12")
    expect(read_bytes(path("a.csv")) == read_bytes(path("b.csv")), "same seed, same bytes")
    expect(read_bytes(path("a.csv")) != read_bytes(path("c.csv")), "different seed, different data")


def case_bad_theta():
    r = run("simulate", "--theta", "-1", "--beta", "0.5", "--output", path("x.csv"))
    expect(r.returncode == 1, f"exit {r.returncode}")
    expect(not os.path.exists(path("x.csv")), "no output written")


def case_round_trip():
    for frailty in ["gamma", "lognormal", "invgauss"]:
        simulate(path("d.csv"), "3", ["--frailty", frailty, "--theta", "0.8"])
        r = run("fit", "--input", path("d.csv"), "--frailty", frailty)
        expect(r.returncode == 0, f"{frailty}: exit {r.returncode} {r.stderr}")
        doc = json.loads(r.stdout)
        expect(doc["model"]["frailty"] == frailty, "model echo")


def case_mc():
    r = run("mc", "--reps", "2", "--jobs", "1", *SIM, "--theta", "2", "--seed", "5", "--output", path("m.json"))
    expect(r.returncode == 0, f"exit {r.returncode}: {r.stderr}")
    with open(path("m.json")) as f:
        doc = json.load(f)
    jsonschema.validate(doc, schema("mc_report.schema.json"))
    expect(doc["replications"] == 2, "replications")
    expect(doc["successes"] + doc["failures"] == 2, "counts")


def case_mc_reps_zero():
    r = run("mc", "--reps", "0", *SIM)
    expect(r.returncode == 1, f"exit {r.returncode}")


def case_mc_jobs():
    common = ["mc", "--reps", "8", *SIM, "--theta", "2", "--seed", "9"]
    a = run(*common, "--jobs", "1", "--output", path("j1.json"))
    b = run(*common, "--jobs", "4", "--output", path("j4.json"))
    env = dict(os.environ, FRAILTY_FIT_THREADS="2")
    c = run(*common, "--output", path("env.json"), env=env)
    expect(a.returncode == b.returncode == c.returncode == 0, "exit codes")
    expect(read_bytes(path("j1.json")) == read_bytes(path("j4.json")), "jobs 1 vs 4 byte-identical")
    expect(read_bytes(path("j1.json")) == read_bytes(path("env.json")), "thread cap from environment")


def case_usage():
    expect(run().returncode == 1, "no subcommand")
    expect(run("fit").returncode == 1, "missing --input")
    expect(run("fit", "--input", "x", "--frailty", "stable").returncode == 1, "unknown frailty")
    expect(run("--help").returncode == 0, "help")


CASES = {name[5:]: fn for name, fn in globals().items() if name.startswith("case_")}

if __name__ == "__main__":
    CASES[CASE]()
    print("ok", CASE)
