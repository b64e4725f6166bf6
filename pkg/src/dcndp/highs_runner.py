"""Minimal MPS-in / plain-solution-out wrapper around HiGHS.

Usage: ``python -m dcndp.highs_runner MODEL.mps OUT.sol TIMELIMIT``

Writes one ``name value`` line per column, preceded by ``# objective`` and
``# bound`` comment lines. Exits non-zero if the MPS file does not load
cleanly or no solution is found.
"""

import sys


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    mps, sol, limit = argv
    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    status = h.readModel(mps)
    if status != highspy.HighsStatus.kOk:
        print(f"readModel returned {status}", file=sys.stderr)
        return 3
    if float(limit) > 0:
        h.setOptionValue("time_limit", float(limit))
    h.run()
    model_status = h.getModelStatus()
    info = h.getInfo()
    lp = h.getLp()
    values = h.getSolution().col_value
    if len(values) != lp.num_col_ or info.primal_solution_status == 0:
        print(f"no solution: {h.modelStatusToString(model_status)}", file=sys.stderr)
        return 4
    is_mip = any(int(t) != 0 for t in lp.integrality_)
    bound = info.mip_dual_bound if is_mip else info.objective_function_value
    with open(sol, "w", encoding="utf-8") as fh:
        fh.write(f"# status {h.modelStatusToString(model_status).replace(' ', '_')}\n")
        fh.write(f"# objective {info.objective_function_value!r}\n")
        fh.write(f"# bound {bound!r}\n")
        for name, val in zip(lp.col_names_, values):
            fh.write(f"{name} {val!r}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
