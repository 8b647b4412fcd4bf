"""codeio-forge: build code input/output prediction training corpora.

Stages: transform raw code files into a unified executable format, sample
input/output pairs by running the code, render prediction prompts, collect
and verify chain-of-thought responses, revise wrong ones with execution
feedback, assemble training JSONL variants, and screen benchmarks for
n-gram leakage.
"""

__version__ = "0.1.0"
