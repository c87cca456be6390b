from .base import DimensionMismatch, EmptyClass, NonFiniteFeature, Unsupported
from .linear import LogisticRegression, PassiveAggressiveClassifier, Perceptron, SGDClassifier
from .naive_bayes import GaussianNB
from .neighbors import KNeighborsClassifier
from .spec import REFERENCE_ROWS, ModelSpec, fit, load_model, save_model
from .tree import DecisionTreeClassifier, RandomForestClassifier

__all__ = [
    "DecisionTreeClassifier", "RandomForestClassifier", "KNeighborsClassifier", "GaussianNB",
    "SGDClassifier", "Perceptron", "PassiveAggressiveClassifier", "LogisticRegression",
    "ModelSpec", "REFERENCE_ROWS", "fit", "save_model", "load_model",
    "EmptyClass", "NonFiniteFeature", "DimensionMismatch", "Unsupported",
]
