# -*- coding: utf-8 -*-

"""
Event and observer classes used to report training progress.

Observers register callbacks by event name; firing an event calls every
registered callback with the event's payload. Events fire on construction
unless `auto_fire` is False.
"""

from __future__ import annotations

__all__ = ['Observer', 'Event', 'EpochCompleted', 'LearningRateReduced', 'CheckpointSaved']

from typing import Callable


class Observer:
    _observers: list[Observer] = []

    def __init__(self):
        self._observing: dict[str, Callable] = {}
        if self not in self._observers:
            self._observers.append(self)

    def register(self, event, callback: Callable) -> None:
        if not isinstance(event, str):
            event = event.__name__
        self._observing[event] = callback

    def close(self) -> None:
        if self in self._observers:
            self._observers.remove(self)

    def __enter__(self) -> Observer:
        return self

    def __exit__(self, *_):
        self.close()

    @classmethod
    def get_observers(cls) -> list[Observer]:
        return cls._observers


class Event:
    def __init__(self, *args, auto_fire: bool = True):
        self.name = type(self).__name__
        self.data = args
        if auto_fire:
            self.fire()

    def fire(self) -> None:
        for observer in list(Observer.get_observers()):
            if self.name in observer._observing:
                observer._observing[self.name](*self.data)


class EpochCompleted(Event):
    """
    Payload: the epoch's `HistoryEntry`.
    """


class LearningRateReduced(Event):
    """
    Payload: epoch, old learning rate, new learning rate.
    """


class CheckpointSaved(Event):
    """
    Payload: epoch, checkpoint directory, mean validation Dice.
    """
