"""Per-layer byte accounting for feedforward and backpropagation.

Two columns are kept side by side.  The table convention counts
feedforward bytes as ``H*W*C*4`` per layer output and backpropagation bytes
from weight-only expressions; for the ``trauma35`` preset the published
expressions are reproduced verbatim, quirks included.  The audit column
recomputes exact parameter counts (weights plus biases) times 4 bytes.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .model.config import NetworkConfig, trauma35

MIB = 2**20
BYTES = 4
ROUNDING_SLACK = 0.2

# (modality, layer) -> (row label, feedforward expression, backprop expression)
_PUBLISHED = {
    ("depth", "input"): ("Input", "256*256*1*4=0.48M", None),
    ("depth", "conv1"): ("Conv1", "256*256*32*4=8M", "3*3*32*1*4=0.001M"),
    ("depth", "pool1"): ("Pool1", "128*128*32*4=2M", "0"),
    ("depth", "conv2"): ("Conv2", "128*128*64*4=4M", "3*3*32*64*4=0.064M"),
    ("depth", "pool2"): ("Pool2", "64*64*64*4=1M", "0"),
    ("depth", "conv3"): ("Conv3", "64*64*128*4=2M", "3*3*64*128*4=0.256M"),
    ("depth", "pool3"): ("Pool3", "32*32*128*4=0.5M", "0"),
    ("depth", "conv4"): ("Conv4", "32*32*256*4=1M", "3*3*128*256*4=1M"),
    ("depth", "pool4"): ("Pool4", "16*16*256*4=0.25M", "0"),
    ("depth", "conv5"): ("Conv5", "16*16*512*4=0.5M", "3*3*256*512*4=4M"),
    ("depth", "pool5"): ("Pool5", "4*4*512*4=0.03M", "0"),
    ("depth", "conv6"): ("Conv6", "4*4*1024*4=0.06M", "3*3*512*1024*4=16M"),
    ("depth", "pool6"): ("Pool6", "1*1*1024*4=0.003M", "0"),
    ("depth", "conv7"): ("Con7", "1*1*1024*4=0.003M", "1*1*1024*1024*4=4M"),
    ("depth", "lstm"): ("LSTM", "512*4=0.002M", "1024*512*4*8=16M"),
    ("depth", "fusion"): ("Fusion", "512*4=0.002M", "512*512*4=1M"),
    ("audio", "input"): ("Input", "64*64*1*4=0.015M", None),
    ("audio", "conv1"): ("Conv1", "64*64*32*4=0.5M", "3*3*32*1*4=0.001M"),
    ("audio", "pool1"): ("Pool1", "32*32*32*4=0.13M", "0"),
    ("audio", "conv2"): ("Conv2", "32*32*64*4=0.25M", "3*3*32*64*4=0.064M"),
    ("audio", "pool2"): ("Pool2", "16*16*64*4=0.06M", "0"),
    ("audio", "conv3"): ("Conv3", "16*16*128*4=0.12M", "3*3*64*128*4=0.256M"),
    ("audio", "pool3"): ("Pool3", "4*4*128*4=0.008M", "0"),
    ("audio", "conv4"): ("Conv4", "4*4*256*4=0.016M", "3*3*128*256*4=1M"),
    ("audio", "pool4"): ("Pool4", "1*1*256*4=0.001M", "0"),
    ("audio", "conv5"): ("Conv5", "1*1*512*4=0.002M", "1*1*256*512*4=0.5M"),
    ("audio", "lstm"): ("LSTM", "256*4=0.001M", "512*256*4*8=5M"),
    ("audio", "fusion"): ("Fusion", None, "512*256*4=0.5M"),
    ("rss", "input"): ("Input", "36*48*25*4=0.16M", None),
    ("rss", "conv1"): ("Conv1", "36*48*32*4=0.21M", "3*3*25*32*4=0.025M"),
    ("rss", "pool1"): ("Pool1", "18*24*32*4=0.05M", "0"),
    ("rss", "conv2"): ("Conv2", "18*24*64*4=0.1M", "3*3*32*64*4=0.064M"),
    ("rss", "pool2"): ("Pool2", "9*12*64*4=0.025M", "0"),
    ("rss", "conv3"): ("Conv3", "9*12*128*4=0.05M", "3*3*64*128*4=0.256M"),
    ("rss", "pool3"): ("Pool3", "3*3*128*4=0.004", "0"),
    ("rss", "conv4"): ("Conv4", "3*3*256*4=0.008M", "3*3*128*256*4=1M"),
    ("rss", "conv5"): ("Conv5", "1*1*512*4=0.002M", "1*1*256*512*4=0.5M"),
    ("rss", "lstm"): ("LSTM", "256*4=0.001M", "512*256*4*5=4M"),
    ("rss", "fusion"): ("Fusion", None, "512*256*4=0.5M"),
    ("level2", "lstm"): ("LSTM", "256*5=0.001M", "512*256*4*8=4M"),
    ("level2", "coding"): ("Coding", "35*2*4=0M", "256*35*4=0.03M"),
}
_PUBLISHED_TOTALS = ("23M", "57.5M")


def expression_bytes(expr):
    """Evaluate the left-hand product of ``a*b*...`` or ``a*b=V``."""
    if expr is None:
        return 0
    lhs = expr.split("=")[0]
    return math.prod(int(t) for t in lhs.split("*"))


def printed_value(expr):
    if expr is None:
        return None
    return expr.split("=")[1] if "=" in expr else expr


def _mib_of(text):
    return float(text.rstrip("M"))


def format_mib(nbytes):
    """Compact MiB rendering in the table's style (``8M``, ``0.064M``, ``0M``)."""
    v = nbytes / MIB
    if v >= 1:
        s = f"{v:.3g}"
    else:
        s = f"{v:.3f}".rstrip("0").rstrip(".")
    return ("0" if s in ("", "0") else s) + "M"


def _expr(*factors):
    body = "*".join(str(f) for f in factors)
    return f"{body}={format_mib(math.prod(factors))}"


@dataclass
class MemoryRow:
    section: str
    layer: str
    label: str
    ff_expr: Optional[str]
    bp_expr: Optional[str]
    audit_params: int
    flags: list = field(default_factory=list)

    @property
    def ff_bytes(self):
        return expression_bytes(self.ff_expr)

    @property
    def bp_bytes(self):
        return 0 if self.bp_expr in (None, "0") else expression_bytes(self.bp_expr)

    @property
    def audit_bytes(self):
        return self.audit_params * BYTES


@dataclass
class MemoryReport:
    config_name: str
    rows: list
    convention: str
    printed_totals: Optional[tuple] = None

    @property
    def ff_total(self):
        return sum(r.ff_bytes for r in self.rows)

    @property
    def bp_total(self):
        return sum(r.bp_bytes for r in self.rows)

    @property
    def audit_total(self):
        return sum(r.audit_bytes for r in self.rows)

    def totals_text(self):
        """The Total row as displayed: published figures for the preset,
        otherwise the row sums."""
        if self.printed_totals:
            return self.printed_totals
        return format_mib(self.ff_total), format_mib(self.bp_total)

    def total_flags(self):
        if not self.printed_totals:
            return []
        out = []
        for kind, text, total in zip(("feedforward", "backpropagation"), self.printed_totals,
                                     (self.ff_total, self.bp_total)):
            if abs(_mib_of(text) - total / MIB) > ROUNDING_SLACK * total / MIB:
                out.append(f"printed {kind} total {text} vs row sum {format_mib(total)}")
            elif format_mib(total) != text:
                out.append(f"printed {kind} total {text} vs row sum {total / MIB:.3f}M, within the rounding slack")
        return out

    def row(self, section, layer):
        for r in self.rows:
            if r.section == section and r.layer == layer:
                return r
        raise KeyError((section, layer))

    # -- rendering ----------------------------------------------------------------

    def to_text(self):
        sections = [s for s in dict.fromkeys(r.section for r in self.rows) if s != "level2"]
        branch_layers = list(dict.fromkeys(r.layer for r in self.rows if r.section != "level2"))
        header = ["Layer"]
        for s in sections:
            header += [f"{s} Feedforward", f"{s} Backpropagation"]
        table = [header]
        for layer in branch_layers:
            label, cells = None, []
            for s in sections:
                hit = [r for r in self.rows if r.section == s and r.layer == layer]
                if hit:
                    label = label or hit[0].label
                    cells += [hit[0].ff_expr or "", hit[0].bp_expr or ""]
                else:
                    cells += ["", ""]
            table.append([label or layer] + cells)
        for r in self.rows:
            if r.section == "level2":
                table.append([r.label, r.ff_expr or "", r.bp_expr or ""] + [""] * (len(header) - 3))
        ff, bp = self.totals_text()
        table.append(["Total", ff, bp] + [""] * (len(header) - 3))
        widths = [max(len(row[i]) for row in table) for i in range(len(header))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in table]
        lines.append("")
        lines.append(f"row sums ({self.convention} convention): feedforward {self.ff_total} B "
                     f"({self.ff_total / MIB:.3f} MiB), backpropagation {self.bp_total} B "
                     f"({self.bp_total / MIB:.3f} MiB)")
        lines.append(f"audit (exact parameters x 4 B): {self.audit_total} B ({self.audit_total / MIB:.3f} MiB)")
        flagged = [r for r in self.rows if r.flags]
        for f in self.total_flags():
            lines.append(f"note: {f}")
        if flagged:
            lines.append("flags:")
            for r in flagged:
                for f in r.flags:
                    lines.append(f"  {r.section}.{r.layer}: {f}")
        return "\n".join(lines) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["section", "layer", "label", "ff_expr", "ff_bytes", "bp_expr", "bp_bytes",
                    "audit_params", "audit_bytes", "flags"])
        for r in self.rows:
            w.writerow([r.section, r.layer, r.label, r.ff_expr or "", r.ff_bytes, r.bp_expr or "",
                        r.bp_bytes, r.audit_params, r.audit_bytes, "; ".join(r.flags)])
        ff, bp = self.totals_text()
        w.writerow(["total", "", "Total", ff, self.ff_total, bp, self.bp_total, "", self.audit_total, ""])
        return buf.getvalue()


def _lstm_params(d, h):
    return 4 * h * (d + h) + 4 * h


def _structural_rows(config):
    rows = []
    for m, spec in config.branches.items():
        h, w, c = spec.input_shape
        rows.append(MemoryRow(m, "input", "Input", _expr(h, w, c, BYTES), None, 0))
        for entry in spec.trace(m):
            layer = entry.name.split(".")[1]
            oh, ow, oc = entry.out_shape
            label = layer.capitalize()
            if entry.layer.kind == "conv":
                k, cin = entry.layer.kernel, entry.in_shape[2]
                rows.append(MemoryRow(m, layer, label, _expr(oh, ow, oc, BYTES), _expr(k, k, cin, oc, BYTES),
                                      k * k * cin * oc + oc))
            else:
                rows.append(MemoryRow(m, layer, label, _expr(oh, ow, oc, BYTES), "0", 0))
        d, hh = spec.output_length, config.lstm1_sizes[m]
        rows.append(MemoryRow(m, "lstm", "LSTM", _expr(hh, BYTES), _expr(d, hh, 4, 8), _lstm_params(d, hh)))
    if config.fusion_width is not None:
        f = config.fusion_width
        for i, m in enumerate(config.branches):
            hh = config.lstm1_sizes[m]
            rows.append(MemoryRow(m, "fusion", "Fusion", _expr(f, BYTES) if i == 0 else None,
                                  _expr(f, hh, BYTES), f * hh + (f if i == 0 else 0)))
        d2 = f
    else:
        d2 = sum(config.lstm1_sizes.values())
    h2, n = config.lstm2_width, config.n_activities
    rows.append(MemoryRow("level2", "lstm", "LSTM", _expr(h2, BYTES), _expr(d2, h2, 4, 8), _lstm_params(d2, h2)))
    rows.append(MemoryRow("level2", "coding", "Coding", _expr(n, 2, BYTES), _expr(h2, n, BYTES),
                          h2 * n + n + 2 * n))
    return rows


def _same_architecture(a, b):
    return replace(a, name="", dropout_rate=0.0) == replace(b, name="", dropout_rate=0.0)


def estimate_memory(config: NetworkConfig, convention="auto"):
    """Build the per-layer memory report.

    ``convention="auto"`` reproduces the published expressions when the
    config is the ``trauma35`` architecture, and derives every expression
    from layer shapes otherwise; ``"structural"`` always derives.
    """
    config.validate()
    rows = _structural_rows(config)
    published = convention == "paper" or (convention == "auto" and _same_architecture(config, trauma35()))
    if convention == "paper" and not _same_architecture(config, trauma35()):
        raise ValueError("the published convention exists only for the trauma35 architecture")
    if not published:
        return MemoryReport(config.name, rows, "structural")

    for r in rows:
        key = (r.section, r.layer)
        if key not in _PUBLISHED:
            r.flags.append("layer not listed in the published table; expression derived from its shape")
            continue
        derived_ff, derived_bp = r.ff_expr, r.bp_expr
        r.label, r.ff_expr, r.bp_expr = _PUBLISHED[key]
        if r.ff_expr and derived_ff and expression_bytes(r.ff_expr) != expression_bytes(derived_ff):
            r.flags.append(f"published feedforward product differs from layer shape ({derived_ff})")
        for expr in (r.ff_expr, r.bp_expr):
            # the table rounds loosely: flag only gaps beyond 20% and beyond
            # half a unit of its third decimal
            if expr and "=" in expr:
                exact = expression_bytes(expr) / MIB
                shown = _mib_of(printed_value(expr))
                if abs(shown - exact) > max(ROUNDING_SLACK * exact, 5e-4):
                    r.flags.append(f"'{expr}': product is {format_mib(expression_bytes(expr))}")
        if r.bp_expr and derived_bp and r.bp_expr != "0" and r.layer.startswith("conv"):
            if expression_bytes(r.bp_expr) != expression_bytes(derived_bp):
                r.flags.append(f"published weight product differs from shape ({derived_bp})")
        if r.layer == "lstm" and r.bp_bytes != r.audit_bytes:
            r.flags.append(f"exact gate parameters {r.audit_params} x 4 B = {format_mib(r.audit_bytes)}")
    report = MemoryReport(config.name, rows, "published", printed_totals=_PUBLISHED_TOTALS)
    return report
