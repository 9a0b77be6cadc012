import math
import re

from dlrgrid.constants import Regex


class ValidateFormat:
    def validate(self, value):
        raise NotImplementedError()


class Probability(ValidateFormat):
    def validate(self, value):
        if not 0.0 < value < 1.0:
            raise ValueError(f"Value {value} must be strictly between 0 and 1")


class Positive(ValidateFormat):
    def validate(self, value):
        if not (math.isfinite(value) and value > 0):
            raise ValueError(f"Value {value} must be positive")


class NonNegative(ValidateFormat):
    def validate(self, value):
        if not (math.isfinite(value) and value >= 0):
            raise ValueError(f"Value {value} must be non-negative")


class Ratio(ValidateFormat):
    def validate(self, value):
        if re.match(Regex.split_ratio, value) is None:
            raise ValueError(f"Value {value} must look like 'a:b' with positive integers a and b")


class Date(ValidateFormat):
    def validate(self, value):
        if re.match(Regex.date, value) is None:
            raise ValueError(f"Value {value} must be a date formatted as YYYY-MM-DD")


class Levels(ValidateFormat):
    def validate(self, value):
        for level in value:
            Probability().validate(level)
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError(f"Value {value} must be strictly ascending")


def get_validate_format(type_, format_):
    format_dict = {
        'number': {
            'probability': Probability,
            'positive': Positive,
            'non-negative': NonNegative,
        },
        'integer': {
            'positive': Positive,
            'non-negative': NonNegative,
        },
        'string': {
            'ratio': Ratio,
            'date': Date,
        },
        'array': {
            'levels': Levels,
        },
    }

    if type_ in format_dict:
        return format_dict[type_].get(format_, None)


def parse_ratio(value):
    Ratio().validate(value)
    first, second = re.match(Regex.split_ratio, value).groups()
    return int(first), int(second)
