import copy

from app.errors import ConfigError

MAMA_MATRICES = [
    [[0.2, 0.8], [0.8, 0.2]],
    [[0.15, 0.85], [0.08, 0.92]],
    [[0.9, 0.1], [0.88, 0.12]],
]

# Quoted values of the second-problem J-family derivative at 0
MAMA_REFERENCES = [0.362455, 0.275]

PRESETS = {
    "figure-1": {
        "command": "geodesic",
        "geodesic": {"start": [0.5, 0.5], "n_directions": 16, "t_max": 2.0},
    },
    "figure-2": {
        "command": "geodesic",
        "geodesic": {"start": [0.35, 0.15], "n_directions": 16, "t_max": 2.0},
    },
    "mama": {
        "command": "divergence",
        "divergence": {"matrices": MAMA_MATRICES, "references": MAMA_REFERENCES},
    },
    "bernoulli": {
        "command": "divergence",
        "divergence": {
            "matrices": [
                [[0.3, 0.7], [0.3, 0.7]],
                [[0.6, 0.4], [0.6, 0.4]],
                [[0.8, 0.2], [0.8, 0.2]],
            ],
            "include_bernoulli_identity": True,
        },
    },
}


def get_preset(name: str) -> dict:
    """
    Raw job configuration of a named preset.

    Args:
        name (str): One of PRESETS

    Returns:
        dict: A fresh copy, safe to override
    """
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}', choose from {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])
