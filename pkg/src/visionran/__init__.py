"""Vision-aided gNB mobility: digital twin, perception, VisionApp controller and DQN."""

__version__ = "0.1.0"
