"""
Utilidades para generar reportes gráficos
"""
import matplotlib

matplotlib.use("Agg")  # sin ventana; solo archivos
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


class ReportGenerator:
    @staticmethod
    def create_score_chart(rows, output_path, title="Scores por dataset (media ± desviación)"):
        """
        Barras agrupadas Score vs Resource Match Score por dataset (fila Total incluida).
        rows: dicts con las columnas del reporte de puntajes (valores como texto o número)
        """
        labels = [r["Dataset"] for r in rows]
        score = [float(r["Score(%)"]) for r in rows]
        score_std = [float(r["Score stddev"]) for r in rows]
        rms = [float(r["ResourceMatchScore(%)"]) for r in rows]
        rms_std = [float(r["ResourceMatchScore stddev"]) for r in rows]

        fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(labels) + 2), 5))
        x = np.arange(len(labels))
        width = 0.38

        bars_score = ax.bar(x - width / 2, score, width, yerr=score_std, capsize=3,
                            label='Score', color='steelblue', alpha=0.8)
        bars_rms = ax.bar(x + width / 2, rms, width, yerr=rms_std, capsize=3,
                          label='Resource Match Score', color='darkorange', alpha=0.8)

        ax.set_ylabel('%')
        ax.set_ylim(0, 110)
        ax.set_title(title)
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=45, ha='right')
        ax.legend()
        ax.grid(True, axis='y', alpha=0.3)

        # Valores encima de las barras
        for bars in (bars_score, bars_rms):
            for bar in bars:
                height = bar.get_height()
                ax.text(bar.get_x() + bar.get_width() / 2., height + 1,
                        f'{height:.1f}', ha='center', va='bottom', fontsize=8)

        fig.tight_layout()
        fig.savefig(output_path, dpi=100, metadata={"Software": None})
        plt.close(fig)
        return output_path
