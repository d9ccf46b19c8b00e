"""Command-line client for the forecasting service.

Every subcommand speaks to the HTTP API: against ``--server-url`` when
given, otherwise against an in-process instance of the app (no network,
no daemon).  File reading and output formatting happen here; all compute
happens behind the service endpoints.

Exit codes: 0 success, 2 alert not fired (forecast unavailable), 1 error.
"""

from __future__ import annotations

import argparse
import asyncio
import csv
import json
import sys
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_ALERT = 2

DEFAULT_SWEEP_GRID = (0.8, 0.9, 0.99, 0.998, 0.9991)


class ServiceClient:
    """Thin HTTP wrapper; in-process ASGI transport unless a URL is given."""

    def __init__(self, server_url: str | None = None):
        self.server_url = server_url
        if server_url is None:
            from .service.app import create_app

            self._app = create_app()

    def post(self, path: str, payload: dict) -> httpx.Response:
        return self._request("POST", path, payload)

    def get(self, path: str) -> httpx.Response:
        return self._request("GET", path, None)

    def _request(self, method: str, path: str, payload: dict | None) -> httpx.Response:
        if self.server_url is not None:
            with httpx.Client(base_url=self.server_url, timeout=600.0) as client:
                return client.request(method, path, json=payload)

        async def call():
            transport = httpx.ASGITransport(app=self._app)
            async with httpx.AsyncClient(
                transport=transport, base_url="http://peakcast.local", timeout=None
            ) as client:
                return await client.request(method, path, json=payload)

        return asyncio.run(call())


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_ERROR


def _check(response: httpx.Response) -> dict:
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise RuntimeError(f"{detail}")
    return response.json()


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_settings(args: argparse.Namespace) -> dict:
    """Config file values overridden by explicit command-line flags."""
    settings: dict = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as handle:
            settings.update(json.load(handle))
    overrides = {
        "preset": getattr(args, "preset", None),
        "facility": getattr(args, "facility", None),
        "lambda": getattr(args, "lam", None),
        "rho": getattr(args, "rho", None),
        "mu": getattr(args, "mu", None),
        "weight_convention": getattr(args, "weight_convention", None),
        "season_start": getattr(args, "season_start", None),
        "season_end": getattr(args, "season_end", None),
    }
    settings.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "seed", None) is not None:
        settings.setdefault("de", {})
        settings["de"]["seed"] = args.seed
    return settings


def _write_rows_csv(path: Path, rows: list[dict]):
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    fields = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def _write_jsonl(path: Path, rows: list[dict]):
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row) + "\n")


def _forecast_long_rows(forecasts: list[dict]) -> list[dict]:
    rows = []
    for fc in forecasts:
        for field, value in fc.items():
            if field == "date":
                continue
            rows.append({"date": fc["date"], "field": field, "value": "" if value is None else value})
    return rows


def cmd_forecast(args) -> int:
    client = ServiceClient(args.server_url)
    payload = {
        "series_csv": _read_text(args.data),
        "history_csv": _read_text(args.history),
        "as_of": args.as_of,
        "settings": _load_settings(args),
    }
    body = _check(client.post("/forecast", payload))
    print(json.dumps(body["forecast"]))
    return EXIT_OK if body["status"] == "ok" else EXIT_NO_ALERT


def _years_in_csv(csv_text: str) -> list[int]:
    years = set()
    for line in csv_text.splitlines()[1:]:
        token = line.split(",", 1)[0].strip()
        if len(token) >= 4 and token[:4].isdigit():
            years.add(int(token[:4]))
    return sorted(years)


def _summary_rows(per_year: list[dict]) -> list[dict]:
    import statistics

    numeric = ("anticipation_days", "peak_date_error_days", "peak_magnitude_error")
    mean_row = {"year": "mean"}
    std_row = {"year": "std"}
    for field in numeric:
        values = [r[field] for r in per_year if r[field] not in (None, "")]
        mean_row["available_years"] = std_row["available_years"] = len(values)
        mean_row[field] = round(statistics.fmean(values), 4) if values else ""
        std_row[field] = round(statistics.stdev(values), 4) if len(values) > 1 else ""
    for row in (mean_row, std_row):
        row.setdefault("facility", "")
        for field in per_year[0]:
            row.setdefault(field, "")
    return [mean_row, std_row]


def cmd_backtest(args) -> int:
    client = ServiceClient(args.server_url)
    seasons_csv = _read_text(args.data)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    settings = _load_settings(args)
    years = _years_in_csv(seasons_csv) if args.all_years else [args.year]
    if not years or years == [None]:
        return _fail("give --year or --all-years")
    excluded = set(settings.get("excluded_years", [2020, 2021]))
    years = [y for y in years if y not in excluded]

    report_rows, anticipation_rows = [], []
    for year in years:
        payload = {
            "seasons_csv": seasons_csv,
            "test_year": year,
            "settings": settings,
            "monitor_from": args.monitor_from,
            "monitor_to": args.monitor_to,
            "base_seed": args.base_seed,
        }
        body = _check(client.post("/backtest", payload))
        metrics = body["metrics"]
        report_rows.append(
            {
                "facility": body["facility"],
                "year": body["year"],
                "stabilization_day": metrics["stabilization_day"] or "",
                "anticipation_days": metrics["anticipation_days"],
                "peak_date_error_days": metrics["date_error_days"],
                "peak_magnitude_error": metrics["magnitude_error"],
                "true_peak_date": body["truth"]["true_peak_date"],
                "true_peak_magnitude": body["truth"]["true_peak_magnitude"],
                "available_years": "",
            }
        )
        anticipation_rows.append(body["anticipation_row"])
        if args.format == "csv":
            _write_rows_csv(out_dir / f"forecasts_{year}.csv", _forecast_long_rows(body["forecasts"]))
        else:
            _write_jsonl(out_dir / f"forecasts_{year}.jsonl", body["forecasts"])
        _write_jsonl(out_dir / f"alerts_{year}.jsonl", body["events"])

    if len(report_rows) > 1:
        report_rows.extend(_summary_rows(report_rows))
    _write_rows_csv(out_dir / "report.csv", report_rows)
    _write_rows_csv(out_dir / "anticipation.csv", anticipation_rows)
    print(f"wrote {out_dir}/report.csv for {len(years)} season(s)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    client = ServiceClient(args.server_url)
    try:
        grid = [float(v) for v in args.grid.split(",") if v.strip()]
    except ValueError:
        return _fail(f"malformed lambda grid {args.grid!r}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "seasons_csv": _read_text(args.data),
        "test_year": args.year,
        "lambda_grid": grid,
        "rho": args.rho,
        "settings": _load_settings(args),
        "monitor_from": args.monitor_from,
        "monitor_to": args.monitor_to,
        "base_seed": args.base_seed,
    }
    body = _check(client.post("/sweep", payload))
    _write_rows_csv(out_dir / "lambda_sweep.csv", body["rows"])
    _write_rows_csv(out_dir / "lambda_summary.csv", body["summary"])
    print(f"wrote {out_dir}/lambda_sweep.csv ({len(body['rows'])} rows)")
    return EXIT_OK


def _theta_payload(args) -> dict | None:
    fields = ("b0", "b1", "phi", "alpha", "i0", "r0")
    values = {f: getattr(args, f) for f in fields}
    if all(v is None for v in values.values()):
        return None
    if any(v is None for v in values.values()):
        raise RuntimeError("give all of --b0 --b1 --phi --alpha --i0 --r0, or none")
    return values


def cmd_synth(args) -> int:
    client = ServiceClient(args.server_url)
    payload = {
        "theta": _theta_payload(args),
        "year": args.year,
        "noise_sigma_frac": args.noise,
        "seed": args.seed if args.seed is not None else 0,
        "facility": args.facility,
    }
    body = _check(client.post("/synth", payload))
    Path(args.out).write_text(body["csv_text"], encoding="utf-8")
    print(
        f"wrote {args.out} (true peak {body['true_peak_date']}, "
        f"{body['true_peak_magnitude']:.2f}/day)"
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    client = ServiceClient(args.server_url)
    theta = _theta_payload(args)
    if theta is None:
        raise RuntimeError("simulate requires an explicit theta (--b0 ... --r0)")
    payload = {
        "theta": theta,
        "start": args.start,
        "end": args.end,
        "step_days": args.step_days,
    }
    body = _check(client.post("/simulate", payload))
    _emit_rows(body["rows"], ["date", "s", "i", "r", "h_sir"], args.out)
    return EXIT_OK


def cmd_smooth(args) -> int:
    client = ServiceClient(args.server_url)
    payload = {"series_csv": _read_text(args.data)}
    body = _check(client.post("/smooth", payload))
    _emit_rows(body["rows"], ["date", "h", "dh", "d2h"], args.out)
    return EXIT_OK


def _emit_rows(rows: list[dict], fields: list[str], out: str | None):
    handle = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        writer = csv.DictWriter(handle, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out:
            handle.close()


def cmd_presets(args) -> int:
    client = ServiceClient(args.server_url)
    body = _check(client.get("/presets"))
    for name, weights in body["presets"].items():
        print(f"{name}: lambda={weights['lambda']} rho={weights['rho']}")
    default = body["default"]
    print(f"(default): lambda={default['lambda']} rho={default['rho']}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("peakcast.service.app:app", host=args.host, port=args.port)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, *, with_profile: bool = True):
    parser.add_argument("--server-url", default=None, help="remote service URL (default: in-process)")
    if with_profile:
        parser.add_argument("--config", default=None, help="JSON settings file")
        parser.add_argument("--preset", default=None, help="facility preset (hlcm, hegc, hfb, hrdr)")
        parser.add_argument("--facility", default=None)
        parser.add_argument("--lambda", dest="lam", type=float, default=None)
        parser.add_argument("--rho", type=float, default=None)
        parser.add_argument("--mu", type=float, default=None)
        parser.add_argument("--weight-convention", choices=["prose", "verbatim-eq2"], default=None)
        parser.add_argument("--season-start", default=None, metavar="MM-DD")
        parser.add_argument("--season-end", default=None, metavar="MM-DD")
        parser.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peakcast",
        description="Forecast seasonal pediatric respiratory hospitalization peaks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forecast", help="one-day forecast from data available up to a date")
    p.add_argument("--data", required=True, help="season CSV (date,facility,age,count or date,count)")
    p.add_argument("--history", required=True, help="multi-year history CSV")
    p.add_argument("--as-of", default=None, help="monitoring day (default: last date in data)")
    _add_common(p)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("backtest", help="replay past season(s) day by day, leave-one-year-out")
    p.add_argument("--data", required=True, help="multi-year CSV with every season")
    p.add_argument("--year", type=int, default=None)
    p.add_argument("--all-years", action="store_true")
    p.add_argument("--monitor-from", default=None)
    p.add_argument("--monitor-to", default=None)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    _add_common(p)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("sweep", help="grid search over the loss balance weight")
    p.add_argument("--data", required=True)
    p.add_argument("--year", type=int, required=True)
    p.add_argument("--grid", default=",".join(str(v) for v in DEFAULT_SWEEP_GRID))
    p.add_argument("--monitor-from", default=None)
    p.add_argument("--monitor-to", default=None)
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="generate a synthetic season CSV")
    p.add_argument("--year", type=int, default=2019)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--facility", default="synthetic")
    p.add_argument("--out", required=True)
    for name in ("b0", "b1", "phi", "alpha", "i0", "r0"):
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--server-url", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("simulate", help="integrate the compartmental model")
    for name in ("b0", "b1", "phi", "alpha", "i0", "r0"):
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--start", required=True)
    p.add_argument("--end", required=True)
    p.add_argument("--step-days", type=float, default=1.0)
    p.add_argument("--out", default=None)
    p.add_argument("--server-url", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("smooth", help="smooth a season CSV into h, dh, d2h")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--server-url", default=None)
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("presets", help="list facility loss-weight presets")
    p.add_argument("--server-url", default=None)
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (RuntimeError, OSError, httpx.HTTPError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
