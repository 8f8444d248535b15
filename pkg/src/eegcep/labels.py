"""The six event classes and their collapsed paradigms."""

SPSW, GPED, PLED, EYEM, ARTF, BCKG = "SPSW", "GPED", "PLED", "EYEM", "ARTF", "BCKG"
TARG = "TARG"

# fixed order; also the argmax tie-break order for hypotheses
CLASSES = (SPSW, GPED, PLED, EYEM, ARTF, BCKG)
TARGET_CLASSES = (SPSW, GPED, PLED)
BACKGROUND_CLASSES = (EYEM, ARTF, BCKG)

# rarest first, by training-set event counts (SPSW 645 ... BCKG 53,726)
RARITY_ORDER = (SPSW, EYEM, GPED, ARTF, PLED, BCKG)
TRAINING_COUNTS = {SPSW: 645, GPED: 6184, PLED: 11254, EYEM: 1170, ARTF: 11053, BCKG: 53726}
