"""Detection of unauthorized RFID readers at a doorway, with blockage elimination.

A walker crossing between the antenna and the tag row briefly lowers RSSI and
drops reads, which looks like interference.  The detector flags rising tag
inter-arrival times, then checks a velocity-matched blockage template before
raising an alarm.
"""
from .detector import AlarmEvent, DetectorConfig, detect, prepare_streams
from .geometry import MovingObject, Scene, impact_distance, occlusion_windows, sight_angles
from .harness import Scenario, compute_metrics, run_scenario, run_trial
from .preprocess import FILTER_WINDOW, moving_average, pchip_resample, preprocess
from .simulator import SimConfig, TagRead, asti_series, simulate
from .velocity import VelocityProfileDB, build_database, match_velocity, pcc

__version__ = "0.1.0"
