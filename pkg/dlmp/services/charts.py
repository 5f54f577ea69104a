"""
SVG charts for run results.

Rendered with matplotlib's SVG backend. The SVG hash salt is fixed and the
date stamp dropped, so the same data always renders to the same bytes.
Every plotted series and bar carries an element id (lmp-<label>,
bar-<level>) that survives into the SVG. Matplotlib draws a line as a <g>
with that id wrapping one <path>, not as a <polyline>, so counting lines
means counting lmp- ids. A NaN gap starts a new M subpath inside the same
path.
"""

import io
from typing import Dict, Mapping, Sequence

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SVG_STYLE = {
    'svg.hashsalt': 'dlmp',
    'svg.fonttype': 'none',
    'font.size': 10,
    'axes.grid': True,
    'grid.alpha': 0.3,
}
FIGSIZE = (10, 4.5)


def _to_svg(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format='svg', bbox_inches='tight', metadata={'Date': None})
    plt.close(fig)
    return buf.getvalue()


def line_chart(series: Mapping[str, Sequence[float]], title: str, x_label: str,
               y_label: str = 'LMP (GBP/MWh)', x_scale: float = 1.0) -> str:
    """
    Line chart with one line per series and a legend of series labels.

    NaN points leave gaps. x_scale converts sample index to axis units.
    """
    with matplotlib.rc_context(SVG_STYLE):
        fig, ax = plt.subplots(figsize=FIGSIZE)
        for label, values in series.items():
            values = np.asarray(values, dtype=float)
            x = np.arange(values.size) * x_scale
            (line,) = ax.plot(x, values, linewidth=1.2, label=label)
            line.set_gid(f'lmp-{label}')
        ax.set_title(title)
        ax.set_xlabel(x_label)
        ax.set_ylabel(y_label)
        if series:
            ax.legend(loc='upper left', bbox_to_anchor=(1.01, 1.0), title='Bus')
        return _to_svg(fig)


def daily_chart(series: Mapping[int, Sequence[float]], day: int) -> str:
    """48 half-hour LMP traces for one day, one per bus."""
    return line_chart({str(bus): values for bus, values in series.items()},
                      title=f'LMP on day {day}', x_label='Hour of day', x_scale=0.5)


def yearly_chart(series: Mapping[int, Sequence[float]], label: str = '') -> str:
    """Whole-run LMP traces, one per bus, on a day axis."""
    title = f'LMP over the run {label}'.strip()
    return line_chart({str(bus): values for bus, values in series.items()},
                      title=title, x_label='Day', x_scale=1.0 / 48)


def level_bars_chart(averages: Dict[int, float], title: str = 'Average LMP by voltage level') -> str:
    """Bar chart of mean LMP per voltage level, in the order given."""
    levels = list(averages)
    values = [float(averages[level]) for level in levels]
    with matplotlib.rc_context(SVG_STYLE):
        fig, ax = plt.subplots(figsize=(6, 4.5))
        bars = ax.bar([f'{level} kV' for level in levels], values, color=[f'C{i}' for i in range(len(levels))])
        for level, value, bar in zip(levels, values, bars):
            bar.set_gid(f'bar-{level}')
            ax.annotate(f'{value:.2f}', (bar.get_x() + bar.get_width() / 2, value),
                        ha='center', va='bottom' if value >= 0 else 'top', fontsize=9)
        ax.axhline(0.0, color='#444', linewidth=0.8)
        ax.set_title(title)
        ax.set_xlabel('Voltage level')
        ax.set_ylabel('Mean LMP (GBP/MWh)')
        return _to_svg(fig)
