"""HTML charts of training histories and evaluation tables."""

import logging

import pandas as pd
import plotly.express as px

logger = logging.getLogger(__name__)


def history_figure(history, title):
    """Line chart of every loss column of a list of training items against iteration."""
    if not history:
        return px.line(title=f"{title} (no iterations)")
    df = pd.DataFrame([item.as_row() for item in history], columns=type(history[0]).field_names())
    value_columns = [c for c in df.columns if c.startswith("loss")]
    long = df.melt(id_vars="iteration", value_vars=value_columns, var_name="series", value_name="value")
    return px.line(
        long,
        x="iteration",
        y="value",
        color="series",
        title=title,
        labels={"iteration": "Iteration", "value": "Loss", "series": "Loss"},
    )


def eval_figure(table, title="Accuracy by model and condition"):
    """Grouped bar chart of an evaluation table with columns model, condition, accuracy."""
    return px.bar(
        table,
        x="model",
        y="accuracy",
        color="condition",
        barmode="group",
        title=title,
        labels={"model": "Model", "accuracy": "Accuracy", "condition": "Condition"},
    )


def write_figure(fig, path):
    # plotly.js comes from the CDN
    fig.write_html(path, include_plotlyjs="cdn")
    logger.info("Wrote %s", path)
    return path
