"""Neural networks whose predictions are guaranteed to satisfy an output constraint.

The network emits softmax weights over a fixed array of particles drawn
from the constraint set K, i.e. a discrete probability measure supported
on K.  A readout (mean, Frechet mean or mode) turns the measure into a
point, and the right readout for the geometry of K keeps that point in K.
"""

from .constraints import (
    BoxSet,
    ConstraintSet,
    CurveSet,
    CurveSpec,
    DiskSet,
    EuclideanGeometry,
    SphereGeometry,
    SphereSet,
    distance_to_set,
    generate,
)
from .errors import (
    CapabilityError,
    ConfigError,
    ConvergenceError,
    DomainError,
    GeodesicBallError,
    TrainingDivergedError,
)
from .measures import DiscreteMeasure, ParticleArray, expectation, frechet_mean, mode, p_attention, w1_to_pointmass
from .model import (
    MlpRegressor,
    ProbabilisticTransformer,
    classical_attention_predict,
    predict_frechet,
    predict_mean,
    predict_measure,
    predict_mode,
)
from .numerics import DenseNet, OptimizerConfig, activation, backward, forward, optimizer_step, softmax
from .training import (
    TrainConfig,
    make_labels,
    select_particles,
    train_baseline_mlp,
    train_classical_transformer,
    train_probabilistic_transformer,
    wasserstein_loss_and_grad,
)

__version__ = "0.1.0"
