"""
Estimator API / abstract class.
Provides common syntax for fitting one error-model variant of the load
regression to a design matrix.
"""

import logging
import pprint
from abc import ABC, abstractmethod
from typing import Any, Generic, TypeVar

from loadnowcast.core.exceptions import ConfigException


logger = logging.getLogger(__name__)

_D = TypeVar("_D")
_M = TypeVar("_M")


class EstimatorAPI(ABC, Generic[_D, _M]):
    """
    Provides common syntax for fitting a regression variant.

    Subclasses register themselves under their `error_model` tag, so that a
    model specification can pick its estimator by name:
    >>> estimator = EstimatorAPI.for_error_model('ar1')
    >>> model = estimator(design)
    """

    error_model: str
    registry: dict[str, type["EstimatorAPI[Any, Any]"]] = {}

    def __init_subclass__(cls, **kwargs: Any) -> None:
        super().__init_subclass__(**kwargs)
        tag = getattr(cls, "error_model", None)
        if tag is not None:
            EstimatorAPI.registry[tag] = cls

    @abstractmethod
    def fit(self, design: _D) -> _M:
        """Abstract method fitting the variant to `design`."""
        raise NotImplementedError(
            f"{type(self).__name__} implements EstimatorAPI "
            + "but does not implement fit!\n"
        )

    def __call__(self, design: _D) -> _M:
        """
        Interprets the following syntax to fit a design:
        >>> estimator = OLSEstimator()
        >>> estimator(design)
        FittedModel(...)
        """
        logger.info("Fitting %s model", self.error_model)
        return self.fit(design)

    @classmethod
    def for_error_model(
        cls, error_model: str, *args: Any, **kwargs: Any
    ) -> "EstimatorAPI[Any, Any]":
        """
        Instantiates the estimator registered under `error_model`.

        Raises
        ------
        ConfigException
            If no estimator is registered under that name.
        """
        if error_model not in cls.registry:
            raise ConfigException(
                f"Tried to fit error model {error_model!r}, which is not "
                + "one of the registered estimators:\n"
                + f"{pprint.pformat(sorted(cls.registry))}\n"
            )
        return cls.registry[error_model](*args, **kwargs)
