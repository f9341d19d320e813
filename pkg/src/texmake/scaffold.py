"""``init``: write a new document project that builds reproducibly as-is."""

from __future__ import annotations

from pathlib import Path

DEFAULT_TITLE = "A Containerized Technical Document"

DOCUMENT_CONF = """\
# texmake project configuration.
# Every key is optional; the values shown are the defaults used when a key
# is absent (or when this file does not exist at all).  Uncomment to change.
#
# latex_main = ms.tex
# bibliography = ms.bib
# results_sources = main.py
# containerfile = Containerfile
# container_context_extras = requirements.txt
# artifacts_dir = artifacts
# image_tag = <directory name>-results
# results_command =
# latex_engine_command =
# bibliography_command =
# latex_image = docker.io/texlive/texlive:TL2023-historic
"""

MS_TEX = r"""\documentclass{article}
\usepackage{booktabs}
\usepackage{datatool}
\DTLloaddb{keys-values}{artifacts/keys-values.csv}

\title{@TITLE@}
\author{}
\date{}

\begin{document}
\maketitle

Results are generated by \texttt{main.py} inside a container and read back
from \texttt{artifacts/}.
This is the \DTLfetch{keys-values}{key}{mode}{value} version: the model was
trained for \DTLfetch{keys-values}{key}{num-epochs}{value} epochs with batch
size \DTLfetch{keys-values}{key}{batch-size}{value} and learning rate
\DTLfetch{keys-values}{key}{lr}{value}.
Code and prose are kept apart, unlike literate programming~\cite{knuth1984literate}.

\begin{table}[ht]
	\centering
	\caption{Simulated losses per epoch.}
	\input{artifacts/metrics.tex}
\end{table}

\bibliographystyle{plain}
\bibliography{ms}

\end{document}
"""

MS_BIB = """\
@article{knuth1984literate,
  title   = {Literate Programming},
  author  = {Knuth, Donald Ervin},
  journal = {The Computer Journal},
  volume  = {27},
  number  = {2},
  pages   = {97--111},
  year    = {1984}
}
"""

MAIN_PY = '''\
"""Generate the results read by ms.tex into artifacts/.

FULL=1 selects the slow, publication-quality run; otherwise a fast draft.
"""

import os
import random

# build-in random module
random.seed(0)
# numpy
# np.random.seed(0)
# tensorflow
# tf.random.set_seed(0)
# pytorch
# torch.backends.cudnn.benchmark = False
# torch.backends.cudnn.deterministic = True
# torch.cuda.manual_seed_all(0)
# torch.manual_seed(0)


def main():
    full = os.environ.get("FULL") == "1"
    num_epochs = 20 if full else 2
    batch_size = 64
    lr = 0.01
    os.makedirs("artifacts", exist_ok=True)

    losses = []
    loss = 1.0
    for _ in range(num_epochs):
        loss *= 1.0 - lr * random.uniform(5.0, 15.0)
        losses.append(loss)

    with open("artifacts/keys-values.csv", "w", newline="\\n") as f:
        f.write("key,value\\n")
        f.write(f"lr,{lr}\\n")
        f.write(f"num-epochs,{num_epochs}\\n")
        f.write(f"batch-size,{batch_size}\\n")
        f.write(f"mode,{'full' if full else 'draft'}\\n")

    with open("artifacts/metrics.tex", "w", newline="\\n") as f:
        f.write("\\\\begin{tabular}{lr}\\n\\\\toprule\\n")
        f.write("Epoch & Loss \\\\\\\\\\n\\\\midrule\\n")
        for epoch, value in enumerate(losses, start=1):
            f.write(f"{epoch} & {value:.4f} \\\\\\\\\\n")
        f.write("\\\\bottomrule\\n\\\\end{tabular}\\n")


if __name__ == "__main__":
    main()
'''

# python:3.12.7-slim-bookworm; pin by digest (FROM image@sha256:...) for
# byte-exact rebuilds across machines.
CONTAINERFILE = """\
FROM docker.io/library/python:3.12.7-slim-bookworm
COPY requirements.txt /tmp/requirements.txt
RUN pip install --no-cache-dir -r /tmp/requirements.txt
WORKDIR /workdir
CMD ["python3", "main.py"]
"""

MAKEFILE = """\
# Thin wrapper so the usual make commands keep working.
#   make            draft artifacts (fast)
#   make FULL=1     full artifacts (slow)
#   make clean      remove artifacts/
.POSIX:

all:
\ttexmake build

verify:
\ttexmake verify

clean:
\ttexmake clean

.PHONY: all verify clean
"""


def templates(title: str = DEFAULT_TITLE) -> dict[str, str]:
    return {
        "Containerfile": CONTAINERFILE,
        "Makefile": MAKEFILE,
        "document.conf": DOCUMENT_CONF,
        "main.py": MAIN_PY,
        "ms.bib": MS_BIB,
        "ms.tex": MS_TEX.replace("@TITLE@", title),
        "requirements.txt": "",
    }


def init_project(directory: str | Path, name: str | None = None) -> list[Path]:
    """Create the project files; refuses to touch a non-empty directory."""
    d = Path(directory)
    if d.exists():
        if not d.is_dir():
            raise FileExistsError(f"{d} exists and is not a directory")
        if any(d.iterdir()):
            raise FileExistsError(f"{d} is not empty; refusing to overwrite")
    d.mkdir(parents=True, exist_ok=True)
    created = []
    for rel, content in templates(name or DEFAULT_TITLE).items():
        p = d / rel
        with open(p, "x", encoding="utf-8", newline="\n") as fh:
            fh.write(content)
        created.append(p)
    return created
