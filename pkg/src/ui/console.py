import sys

from settings.config import APP_TITLE


def show_banner():
    print(f"🚀 {APP_TITLE}")


def show_status_message(message):
    print(f"⏳ {message}")


def show_success(message):
    print(f"✅ {message}")


def show_warning(message):
    print(f"⚠️  {message}")


def show_error(message):
    print(f"❌ {message}", file=sys.stderr)


def show_summary(rows):
    """One line per (config_id, method) group of reports.summarize."""
    if not rows:
        show_warning("Sin resultados.")
        return
    print(f"{'config':>8} {'método':<22} {'n':>4} {'fallos':>6} {'RMSE medio':>14} {'RMSE mediana':>14}")
    for row in rows:
        print(f"{row['config_id']:>8} {row['method']:<22} {row['count']:>4} {row['failures']:>6} "
              f"{row['mean_rmse']:>14.6g} {row['median_rmse']:>14.6g}")
