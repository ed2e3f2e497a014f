"""Declarative sound-level arithmetic.

Playback levels are budget semantics, not acoustics: every event carries a
calibrated reference level in dBA and the mix is computed, never measured.
Concurrent sources add energetically; a constant silence floor underlies
every zone.
"""

import math

SILENCE_FLOOR_DBA = 30.0

# Envelope amplitudes below this floor still produce a finite level term.
MIN_ENV_AMPLITUDE = 0.05


def db_to_power(db: float) -> float:
    return 10.0 ** (db / 10.0)


def power_to_db(power: float) -> float:
    return 10.0 * math.log10(power)


def energetic_sum(levels_dba) -> float:
    """Combined level of simultaneous sources, in dBA.

    Empty input yields -inf power, so callers normally include the floor.
    """
    total = sum(db_to_power(lv) for lv in levels_dba)
    if total <= 0.0:
        return float("-inf")
    return power_to_db(total)


def zone_level(voice_levels_dba, floor_dba: float = SILENCE_FLOOR_DBA) -> float:
    """Zone level: active voices energetically summed over the silence floor."""
    return energetic_sum(list(voice_levels_dba) + [floor_dba])


def amplitude_gain_db(amplitude: float) -> float:
    """Gain contribution of an envelope amplitude, floored at MIN_ENV_AMPLITUDE."""
    return 20.0 * math.log10(max(amplitude, MIN_ENV_AMPLITUDE))


def event_level_dba(ref_level_dba: float, gain_db: float, env_amplitude: float) -> float:
    """Computed playback level of one event under the declarative model."""
    return ref_level_dba + gain_db + amplitude_gain_db(env_amplitude)
