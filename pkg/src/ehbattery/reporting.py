"""CSV output.  Column sets are fixed; floats carry 12 significant digits."""
import csv
import math

SWEEP_COLUMNS = (
    "e_c", "theta", "empirical_underflow", "approx_exp", "approx_refined", "delta_hat", "events", "low_confidence",
)
COMPARE_COLUMNS = ("policy", "theta", "e_c", "mean_service_rate", "outage_freq")
TRACE_COLUMNS = (
    "policy", "parameter", "theta", "e_c", "frames_counted", "underflow_freq", "underflow_events",
    "underflow_stderr", "low_confidence", "outage_freq", "delta_hat", "overflow_loss_rate",
    "mean_service_rate", "mean_consumed", "theta_hat", "fit_r_squared", "approx_exp", "approx_refined",
    "audit_relative_residual",
)
TAIL_COLUMNS = ("threshold", "exceed_freq", "log_prob", "events", "approx_exp")
SOLVE_COLUMNS = ("policy", "theta", "parameter", "mgf_residual", "mean_net_flow", "stable")


def fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_rows(fh, columns, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row[c]) for c in columns])


def sweep_records(rows):
    return [
        {
            "e_c": float(r.e_c),
            "theta": float(r.theta),
            "empirical_underflow": float(r.empirical_underflow),
            "approx_exp": float(r.approx_exp),
            "approx_refined": float(r.approx_refined),
            "delta_hat": float(r.delta_hat),
            "events": int(r.events),
            "low_confidence": bool(r.low_confidence),
        }
        for r in rows
    ]


def compare_records(rows):
    return [
        {
            "policy": r.policy,
            "theta": float(r.theta),
            "e_c": float(r.e_c),
            "mean_service_rate": float(r.mean_service_rate),
            "outage_freq": float(r.outage_freq),
        }
        for r in rows
    ]


def trace_record(stats):
    tail = stats.tail
    ok = math.isfinite(stats.theta) and stats.theta > 0
    approx = math.exp(-stats.theta * stats.e_c) if ok else math.nan
    return {
        "policy": stats.policy.kind,
        "parameter": float(stats.policy.parameter),
        "theta": float(stats.theta),
        "e_c": float(stats.e_c),
        "frames_counted": stats.frames_counted,
        "underflow_freq": stats.underflow_freq,
        "underflow_events": stats.underflow_events,
        "underflow_stderr": stats.underflow_stderr,
        "low_confidence": stats.low_confidence,
        "outage_freq": stats.outage_freq,
        "delta_hat": stats.delta_hat,
        "overflow_loss_rate": stats.overflow_loss_rate,
        "mean_service_rate": stats.mean_service_rate,
        "mean_consumed": stats.mean_consumed,
        "theta_hat": tail.theta_hat if tail else math.nan,
        "fit_r_squared": tail.fit_r_squared if tail else math.nan,
        "approx_exp": approx,
        "approx_refined": stats.delta_hat * approx,
        "audit_relative_residual": stats.audit.relative_residual,
    }


def tail_records(stats):
    tc = stats.tail_counts
    ok = math.isfinite(stats.theta) and stats.theta > 0
    out = []
    for t, x, ev in zip(tc.thresholds, tc.exceed, tc.events):
        freq = x / tc.frames
        out.append(
            {
                "threshold": t,
                "exceed_freq": freq,
                "log_prob": math.log(freq) if freq > 0 else -math.inf,
                "events": ev,
                "approx_exp": math.exp(-stats.theta * t) if ok else math.nan,
            }
        )
    return out
