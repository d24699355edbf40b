//! LIME explanations for image classifiers over interchangeable superpixel
//! segmenters, and a Jaccard-based harness for scoring them against
//! reference relevance masks.

pub mod classifier;
pub mod evaluation;
pub mod explain;
pub mod imaging;
pub mod segment;
pub mod synth;

pub use classifier::{ClassifierError, ClassifierSpec, Gateway, Prediction};
pub use evaluation::{
    evaluate_corpus, jaccard, sweep, EvalConfig, EvalError, EvalOutcome, EvalRecord, EvalReport,
    Verdict, VerdictFilter,
};
pub use explain::{
    explain, explanation_mask, fit_k_lasso, sample_pool, ExplainError, Explanation,
    PerturbationConfig, PerturbedSample, Replacement,
};
pub use imaging::{Image, ImagingError, LabImage, Mask, Rgb};
pub use segment::{
    boundary_overlay, CompactWatershedParams, FelzParams, LabelMap, Method, QuickShiftParams,
    Segmenter, SegmenterError, SlicParams,
};
