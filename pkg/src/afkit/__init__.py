"""afkit: adversarial filtering toolkit for de-biased multiple-choice datasets.

Pipeline: ingest paired captions -> train per-fold n-gram LMs -> oversample
counterfactual endings -> adversarially filter them against a committee of
stylistic classifiers -> validate with human (or scripted) annotators ->
assemble 4-way questions -> measure residual bias with shallow baselines.
"""

__version__ = "0.1.0"
