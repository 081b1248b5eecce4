"""Body-capacitance + IMU activity recognition: numpy nets, data plumbing, LOSO harness."""

__version__ = "0.1.0"
