"""Frequency-domain ultrasound beamforming: WCI and HWCI.

Modules
-------
grid         imaging grids, sound-speed maps, array geometry, MEDIUM.bin
propagation  Rayleigh oracle, ASM / HASM / split-step kernels, depth marching
beamformer   preprocessing, transmit/receive fields, correlation, compounding
synth        layered phantoms and a straight-ray Born RF simulator
metrics      lateral FWHM, gCNR, sharpness, comparison statistics
io           channel-data container, image export, scatterer tables
cli          ``hwci`` command-line pipeline
"""

from .beamformer import (BandSelection, ChannelData, ImagePlane, beamform, compound,
                         correlate, preprocess, receive_field, transmit_field)
from .errors import HWCIError
from .grid import (ArrayGeometry, ImagingGrid, MediumMap, TransmitEvent, plane_wave_delays,
                   read_medium, resample_medium, write_medium)
from .propagation import (HeterogeneitySlab, LateralAxis, SpectralField, asm_step, hasm_step,
                          march_field, rayleigh_project, split_step)

__version__ = "0.1.0"
