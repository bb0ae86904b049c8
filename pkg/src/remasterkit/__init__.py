"""remasterkit: self-supervised end-to-end music remastering toolkit."""

from .audio import (
    FilterSpec,
    MidSideWaveform,
    StereoWaveform,
    from_mid_side,
    load_wav,
    resample2,
    rms,
    save_wav,
    segment,
    to_mid_side,
)
from .fx import (
    EqBand,
    FxParams,
    ImagerParams,
    MaximizerParams,
    ParamRanges,
    apply_chain,
    apply_eq,
    apply_maximizer,
    apply_stereo_imager,
    crossover_split,
    params_from_seed,
    sample_fx_params,
)
from .dataset import (
    SongEntry,
    TripletExample,
    build_triplet,
    fabricate,
    make_contrastive_pair,
    scan_corpus,
)
from .encoder import EffectsEncoder, EncoderConfig, ProjectionHead, encode, nt_xent_loss
from .cloner import ClonerConfig, MasteringCloner, clone, film, remaster_waveform
from .losses import (
    MssSpec,
    RmsLossSpec,
    cloner_loss,
    hinge_d_loss,
    hinge_g_loss,
    mss_loss,
    rms_loss,
)
from .discriminator import DiscriminatorConfig, ProjectionDiscriminator, spectrogram
from .metrics import delta_rms, delta_rms_side, evaluate_pairs, fw_snr, stoi
from .training import TrainConfig, load_cloner, load_encoder, pretrain_encoder, train_cloner

__version__ = "0.1.0"
