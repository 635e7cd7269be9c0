from molgen.molgan.config import SAMPLING_MODES, MolganConfig
from molgen.molgan.loss import CriticLoss, gradient_penalty, interpolate, wgan_gp_loss
from molgen.molgan.model import (
    Discriminator,
    Generator,
    discriminate,
    generate,
    relax,
    sample_latent,
)
from molgen.molgan.train import (
    EmptyDatasetError,
    History,
    MolGAN,
    NaNLossError,
    is_generator_step,
    predict_generator,
    train,
)
