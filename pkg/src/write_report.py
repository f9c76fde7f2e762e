import json
from pathlib import Path
from typing import List

import pandas as pd
from pathvalidate import ValidationError as PathValidationError
from pathvalidate import validate_filename

from src.goodies import plural
from src.user_errors import ValidationError
from src.user_types import RejectionTable, RunManifest, TestOutcome

TABLE_COLUMNS = ["model", "g1", "g2", "a", "c", "n", "reps", "reject_rate", "mc_se"]
FLOAT_FORMAT = "%.17g"


def output_path(out_dir: Path, name: str) -> Path:
    """
    Raises:
        ValidationError: the name is not a valid file name on the current platform.
    """
    try:
        validate_filename(name)
    except PathValidationError as e:
        raise ValidationError(f"Invalid output file name '{name}': {e}.")
    return Path(out_dir) / name


def format_test_report(outcome: TestOutcome, alpha: float) -> str:
    decision = "reject the null model" if outcome.reject else "fail to reject the null model"
    lines = [
        f"Null model: {outcome.model_kind}",
        f"Parameter estimate: {list(outcome.theta_hat)}",
        f"Nuisance bandwidth: {outcome.nuisance_bandwidth}",
        f"Residual bandwidth: {outcome.residual_bandwidth}",
        "",
        "h\tlambda_n\tstandardized",
    ]
    for (h, lambda_n, standardized) in zip(outcome.h_values, outcome.lambda_n, outcome.standardized):
        lines.append(f"{h:.6g}\t{lambda_n:.10g}\t{standardized:.10g}")
    lines += [
        "",
        f"Sup statistic: {outcome.sup_statistic:.10g} (at h = {outcome.argmax_h:.6g})",
        f"Bootstrap quantile at level {alpha}: {outcome.bootstrap.q_hat:.10g}",
        f"p-value: {outcome.p_value:.6g}",
        f"Replicates: {outcome.n_boot - outcome.failures} of {outcome.n_boot} ({plural(outcome.failures, 'failure')})",
        f"Decision: {decision}",
    ]
    return "\n".join(lines) + "\n"


def write_test_report(outcome: TestOutcome, out_dir: Path, stem: str, alpha: float) -> List[Path]:
    csv_path = output_path(out_dir, f"{stem}_report.csv")
    text_path = output_path(out_dir, f"{stem}_report.txt")
    frame = pd.DataFrame(
        {"h": outcome.h_values, "lambda_n": outcome.lambda_n, "standardized": outcome.standardized}
    )
    frame.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)
    text_path.write_text(format_test_report(outcome, alpha))
    return [csv_path, text_path]


def table_frame(table: RejectionTable) -> pd.DataFrame:
    return pd.DataFrame([row._asdict() for row in table], columns=TABLE_COLUMNS)


def format_summary(table: RejectionTable) -> str:
    lines = ["model\tg1\tg2\ta\tc\tn\trate\tse\tfailures"]
    for row in table:
        flag = "\tunreliable" if row.unreliable else ""
        lines.append(
            f"{row.model}\t{row.g1 or '-'}\t{row.g2 or '-'}\t{row.a:g}\t{row.c:g}\t{row.n}"
            f"\t{row.reject_rate:.3f}\t{row.mc_se:.3f}\t{row.failures}/{row.reps}{flag}"
        )
    return "\n".join(lines) + "\n"


def write_rejection_table(table: RejectionTable, out_dir: Path, name: str) -> List[Path]:
    csv_path = output_path(out_dir, f"{name}_table.csv")
    text_path = output_path(out_dir, f"{name}_summary.txt")
    table_frame(table).to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)
    text_path.write_text(format_summary(table))
    return [csv_path, text_path]


def write_manifest(manifest: RunManifest, out_dir: Path) -> Path:
    path = output_path(out_dir, "manifest.json")
    path.write_text(json.dumps(manifest._asdict(), indent=4) + "\n")
    return path
