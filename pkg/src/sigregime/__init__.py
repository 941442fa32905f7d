"""Signature-kernel regime detection and clustering on path space."""

from .baselines import (SigConResult, VarianceNormModel, build_variance_norm,
                        conformance, shuffle_product, sigcon_detect, variance_norm)
from .cluster import (ClusterAssignment, DistanceMatrix, agglomerate,
                      assign_subpath_labels, distance_matrix)
from .config import ExperimentConfig, load_config, parse_config
from .data_io import IngestReport, ingest_csv
from .detect import (Beliefs, DetectionReport, RollingNull, auto_evaluate,
                     build_beliefs, detect_online, pathwise_detect,
                     rolling_threshold, score_vector)
from .errors import (CapacityError, ConfigError, DataError, NumericError,
                     SigregimeError)
from .metrics import RunMetrics, metrics
from .mmd import (NullDistribution, TestResult, bootstrap_null, gamma_threshold,
                  mmd_between, mmd_biased, mmd_unbiased, permutation_null,
                  two_sample_test)
from .models import (ModelPair, RegimeSwitchResult, RegimeSwitchSpec,
                     simulate_gbm, simulate_merton, simulate_rbergomi,
                     simulate_regime_switching)
from .scoring import SimilarityReport, kernel_score, similarity_matrix, similarity_score
from .sigkernel import (GramMatrix, KernelSpec, gram, rank2_kernel, sig_kernel,
                        solve_goursat, truncated_kernel)
from .signature import (TruncatedTensorSeries, chen_product, expected_signature,
                        signature_lift, tensor_exp, truncated_signature)
from .streams import (EnsembleSet, StreamTransformer, SubPathSet,
                      TimeAugmentedStream, Transform, apply_transform, compose,
                      embed_linear, extract_ensembles, extract_subpaths,
                      subpath_tensor)

__version__ = "0.1.0"
