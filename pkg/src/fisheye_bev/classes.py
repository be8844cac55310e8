"""Class taxonomies shared by heads, metrics, and the synthetic generator.

Segmentation (5 classes): 0 ground, 1 car, 2 bus, 3 EV charger,
4 non-driveable area. Height (3 classes): 0 below car level, 1 at car
level, 2 above car level. The car-level band reuses the reference-point
height anchors (0.25 m, 1.8 m).

Renders use two extra semantic ids that never appear in BEV maps: sky
(no scene hit) and void (pixels masked by the camera or ego body).
"""

SEG_GROUND = 0
SEG_CAR = 1
SEG_BUS = 2
SEG_CHARGER = 3
SEG_NON_DRIVEABLE = 4
N_SEG_CLASSES = 5

HEIGHT_BELOW = 0
HEIGHT_AT = 1
HEIGHT_ABOVE = 2
N_HEIGHT_CLASSES = 3

SEM_SKY = 5
SEM_VOID = 6

SEG_CLASS_NAMES = ("ground", "car", "bus", "ev_charger", "non_driveable")
HEIGHT_CLASS_NAMES = ("below_car_level", "at_car_level", "above_car_level")

# background classes excluded from frequency-weighted IoU
BACKGROUND_CLASS = {"height": HEIGHT_BELOW, "segmentation": SEG_GROUND}

DEFAULT_CAR_BAND = (0.25, 1.8)

# self-defined render palette (ingesting external data with a different
# encoding requires a palette map)
PALETTE = {
    SEG_GROUND: (90, 90, 90),
    SEG_CAR: (220, 60, 60),
    SEG_BUS: (230, 190, 60),
    SEG_CHARGER: (70, 110, 230),
    SEG_NON_DRIVEABLE: (120, 200, 90),
    SEM_SKY: (180, 210, 240),
    SEM_VOID: (20, 20, 20),
}

HEIGHT_PALETTE = {
    HEIGHT_BELOW: (0, 0, 0),
    HEIGHT_AT: (128, 128, 128),
    HEIGHT_ABOVE: (255, 255, 255),
}


def class_names(task: str) -> tuple[str, ...]:
    if task == "height":
        return HEIGHT_CLASS_NAMES
    if task == "segmentation":
        return SEG_CLASS_NAMES
    raise ValueError(f"unknown task {task!r}")
