# modules/evaluation/views.py
"""
Vistas de Evaluación
- Reporte agregado con el diseño de la tabla de puntajes (una fila por dataset + Total)
- Detalle por iteración (S, K, P, N)
- Resumen legible para consola
"""
import csv
import io
from typing import Dict, List, Sequence

from database.models import DatasetScore, RunAggregate

REPORT_COLUMNS = (
    "Dataset", "Score(%)", "Score stddev", "ResourceMatchScore(%)", "ResourceMatchScore stddev",
)
ITERATION_COLUMNS = (
    "Iteration", "Dataset", "N", "S", "K", "P", "Mismatch", "Score(%)", "ResourceMatchScore(%)",
)


class ScoreReportView:
    def __init__(self, number_format: str = "%.2f"):
        self.number_format = number_format

    def fmt(self, value: float) -> str:
        return self.number_format % value

    def render_report(self, run: RunAggregate) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in list(run.rows) + [run.total]:
            writer.writerow([
                r.dataset_name, self.fmt(r.score_mean), self.fmt(r.score_std),
                self.fmt(r.resource_match_mean), self.fmt(r.resource_match_std),
            ])
        return buffer.getvalue()

    def render_iterations(self, iteration_scores: Sequence[Dict[str, DatasetScore]]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(ITERATION_COLUMNS)
        for i, table in enumerate(iteration_scores, start=1):
            for name in sorted(table):
                s = table[name]
                writer.writerow([
                    i, name, s.N, s.S, s.K, "%.6f" % s.P, s.mismatches,
                    self.fmt(s.score), self.fmt(s.resource_match_score),
                ])
        return buffer.getvalue()

    @staticmethod
    def parse_report(content: str) -> List[Dict[str, str]]:
        return list(csv.DictReader(io.StringIO(content)))

    def render_summary(self, report_rows: List[Dict[str, str]], metadata: Dict[str, str]) -> str:
        """Tabla de texto de ancho fijo + metadatos del run"""
        widths = [max(len(c), *(len(r[c]) for r in report_rows)) if report_rows else len(c)
                  for c in REPORT_COLUMNS]
        lines = [
            "  ".join(c.ljust(w) for c, w in zip(REPORT_COLUMNS, widths)),
            "  ".join("-" * w for w in widths),
        ]
        for r in report_rows:
            lines.append("  ".join(r[c].ljust(w) for c, w in zip(REPORT_COLUMNS, widths)))
        if metadata:
            lines.append("")
            key_width = max(len(k) for k in metadata)
            for k, v in metadata.items():
                lines.append(f"{k.ljust(key_width)} : {v}")
        return "\n".join(lines) + "\n"
