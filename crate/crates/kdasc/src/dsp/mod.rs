pub mod features;
pub mod filterbank;
pub mod stft;

pub use features::{
    add_deltas, compute_stats, featurize_raw, load_feature, save_feature, standardize,
    ChannelStats, FeatureTensor, Frontend, FEAT_CHANNELS, FEAT_FRAMES, FEAT_FREQS, FEAT_LEN,
};
pub use filterbank::{
    apply_filterbank, build_cqt_filterbank, build_filterbank, build_gammatone_filterbank,
    build_mel_filterbank, FilterBank,
};
pub use stft::{stft_power, Mat, SpecKind, SpectrogramConfig, SAMPLE_RATE};
