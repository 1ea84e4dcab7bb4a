"""Low-degree polynomial estimation for sparse block models.

Submodules:
  model        random models, labels, correlation metric
  sawpoly      self-avoiding-walk and star polynomial evaluation (color coding)
  projection   Dykstra projections / minimum-norm point in convex intersections
  rounding     hyperplane and spectral rounding, cleanup to probability vectors
  xvalid       holdout cross-validation estimators S3 / S4
  tensordecomp degree-4 pseudoexpectations and low-correlation decomposition
  spectrum     low-degree Fourier mass of the block-model likelihood ratio
  pipeline     end-to-end recovery algorithms and the experiment harness
"""

__version__ = "0.1.0"
