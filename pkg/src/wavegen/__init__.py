"""wavegen: unpaired semantic image synthesis in the wavelet domain.

A from-scratch numpy stack: an autodiff tensor engine, exact 2D Haar
transforms, SPADE/pixelSPADE generator blocks, a wavelet discriminator,
a UNet segmenter, and the unpaired training harness tying them together.
"""

from .tensor import Tensor, Adam, no_grad, backward, grad_of
from .wavelet import (CHANNELWISE, SPATIAL, WaveletFeatures, arrange, dwt,
                      dwt_channelwise, dwt_spatial, iwt, iwt_channelwise, iwt_spatial)
from .blocks import Conv2d, PixelSpade, Spade, WaveletResBlock, wavelet_downsample, wavelet_upsample
from .models import Discriminator, Generator, GeneratorConfig, UNet, make_3d_noise, sample_noise
from .losses import (ClassWeights, adversarial_losses, compute_class_weights,
                     generator_objective, seg_loss)
from .data import (SemanticLayout, ShapesWorldSpec, UnpairedSampler, generate_world,
                   load_dataset, one_hot, read_image_png, read_label_png,
                   write_dataset, write_image_png, write_label_png)
from .train import (ModelBundle, TrainConfig, TrainingDiverged, fit, load_bundle,
                    load_checkpoint, save_checkpoint, train_step)
from .evaluate import (evaluate_bundle, generate_images, miou, oracle_segment,
                       radial_profile, spectrum_distance, train_oracle_unet)

__version__ = "0.1.0"
