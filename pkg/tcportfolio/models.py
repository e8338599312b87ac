"""
Declarative configuration models.

Configuration objects are declared much like database models: a class lists typed parameters as class
attributes, the metaclass collects them, and instantiating the class validates every keyword argument
against its parameter.

.. code-block:: python

    class Rates(models.Model):
        tc_buy = models.Float(default=0.0, min_val=0.0, max_val=1.0, max_open=True, desc='Buying cost rate')
        tc_sell = models.Float(default=0.0, min_val=0.0, max_val=1.0, max_open=True, desc='Selling cost rate')

    rates = Rates(tc_buy=0.01)
"""

import math
import numbers
from collections.abc import Iterable, Mapping
from typing import Any, Dict

from . import log

logger = log.get_module_logger(__name__)

PORTFOLIO_KINDS = ('index_tracking', 'equal', 'entropy', 'diversity', 'diversity_dynamic')
TRADING_FREQUENCIES = ('daily', 'weekly', 'monthly')
RENEWING_FREQUENCIES = ('weekly', 'monthly', 'quarterly')


class ValidationError(ValueError):
    """
    Invalid configuration value.

    :param path: dotted path of the offending field, e.g. ``grids[1].tc[2]``
    :param message: description of the problem
    """

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super(ValidationError, self).__init__(f'{path}: {message}' if path else message)

    def within(self, prefix):
        """Return a copy of the error with its path nested under `prefix`."""
        if not self.path:
            path = prefix
        elif self.path.startswith('['):
            path = f'{prefix}{self.path}'
        else:
            path = f'{prefix}.{self.path}'
        return ValidationError(path, self.message)


class ParameterType(type):
    """Parameter MetaClass, merges the option defaults of all base classes"""

    def __new__(cls, name, bases, attrs):
        defaults = {}
        for base in reversed(bases):
            defaults.update(getattr(base, 'defaults', {}))
        defaults.update(attrs.get('defaults', {}))
        attrs['defaults'] = defaults
        return super(ParameterType, cls).__new__(cls, name, bases, attrs)


class Parameter(object, metaclass=ParameterType):
    """
    Base class for all parameter types. Do not use directly.

    :keyword default: value used when the keyword is missing or None
    :keyword required: reject missing values instead of using the default
    :keyword desc: description (str)
    """

    defaults = {
        'default': None,
        'required': False,
        'desc': '',
    }

    def __init__(self, **kwargs):
        self.options = dict(self.defaults)
        self.options.update(kwargs)

    def __repr__(self):
        return f'<{self.__class__.__name__} {self.options["desc"]!r}>'

    @property
    def default(self):
        return self.options['default']

    def validate(self, name, value):
        """
        Check a value, returning it converted to the parameter type.

        :param name: field path used in error messages
        :param value: raw value
        :return: converted value
        """
        if value is None:
            if self.options['required']:
                raise ValidationError(name, 'value is required')
            value = self.default
            if value is None:
                return None
        return self.convert(name, value)

    def convert(self, name, value):
        return value


class Float(Parameter):
    """
    Floating point parameter.

    :keyword min_val: lower bound, default (no limit)
    :keyword max_val: upper bound, default (no limit)
    :keyword min_open: exclude the lower bound itself
    :keyword max_open: exclude the upper bound itself
    """

    defaults = {
        'min_val': None,
        'max_val': None,
        'min_open': False,
        'max_open': False,
    }

    def convert(self, name, value):
        if isinstance(value, bool) or not isinstance(value, (numbers.Real, str)):
            raise ValidationError(name, f'expected a number, got {value!r}')
        try:
            value = float(value)
        except ValueError:
            raise ValidationError(name, f'expected a number, got {value!r}')
        if not math.isfinite(value):
            raise ValidationError(name, f'expected a finite number, got {value!r}')
        return self.check_bounds(name, value)

    def check_bounds(self, name, value):
        low, high = self.options['min_val'], self.options['max_val']
        if low is not None:
            if value < low or (self.options['min_open'] and value == low):
                bracket = '>' if self.options['min_open'] else '>='
                raise ValidationError(name, f'must be {bracket} {low}, got {value!r}')
        if high is not None:
            if value > high or (self.options['max_open'] and value == high):
                bracket = '<' if self.options['max_open'] else '<='
                raise ValidationError(name, f'must be {bracket} {high}, got {value!r}')
        return value


class Integer(Float):
    """
    Integer parameter, accepts integral floats such as ``100.0``.
    """

    def convert(self, name, value):
        if isinstance(value, bool):
            raise ValidationError(name, f'expected an integer, got {value!r}')
        if isinstance(value, str):
            try:
                value = int(value)
            except ValueError:
                raise ValidationError(name, f'expected an integer, got {value!r}')
        if isinstance(value, numbers.Integral):
            value = int(value)
        elif isinstance(value, numbers.Real) and float(value).is_integer():
            value = int(value)
        else:
            raise ValidationError(name, f'expected an integer, got {value!r}')
        return self.check_bounds(name, value)


class String(Parameter):
    """String parameter."""

    def convert(self, name, value):
        if not isinstance(value, str):
            raise ValidationError(name, f'expected a string, got {value!r}')
        return value


class Boolean(Parameter):
    """Boolean parameter, also accepts the strings true/false, yes/no, on/off and 1/0."""

    TRUE = ('true', 'yes', 'on', '1')
    FALSE = ('false', 'no', 'off', '0')

    def convert(self, name, value):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.strip().lower() in self.TRUE + self.FALSE:
            return value.strip().lower() in self.TRUE
        if isinstance(value, numbers.Integral) and value in (0, 1):
            return bool(value)
        raise ValidationError(name, f'expected true or false, got {value!r}')


class Choice(Parameter):
    """
    Parameter restricted to a fixed set of values.

    :keyword choices: list/tuple of allowed values
    """

    defaults = {
        'choices': (),
    }

    @property
    def choices(self):
        return tuple(self.options['choices'])

    def convert(self, name, value):
        if value not in self.choices:
            raise ValidationError(name, f'must be one of {", ".join(map(str, self.choices))}, got {value!r}')
        return value


class Array(Parameter):
    """
    List parameter whose items are all validated by another parameter.

    :keyword item: Parameter instance for the items
    :keyword min_length: minimum number of items, default (0)
    """

    defaults = {
        'item': None,
        'min_length': 0,
    }

    def convert(self, name, value):
        if isinstance(value, (str, bytes, Mapping)) or not isinstance(value, Iterable):
            value = [value]
        value = list(value)
        if len(value) < self.options['min_length']:
            raise ValidationError(name, f'needs at least {self.options["min_length"]} item(s), got {len(value)}')
        item = self.options['item']
        if item is None:
            return value
        return [item.validate(f'{name}[{i}]', v) for i, v in enumerate(value)]


class Nested(Parameter):
    """
    Parameter holding another model, given as a mapping of keyword arguments.

    :keyword model: Model subclass
    """

    defaults = {
        'model': None,
    }

    def convert(self, name, value):
        model = self.options['model']
        if isinstance(value, model):
            return value
        if not isinstance(value, Mapping):
            raise ValidationError(name, f'expected a mapping, got {value!r}')
        try:
            return model(**value)
        except ValidationError as err:
            raise err.within(name)


class ModelType(type):
    def __new__(cls, name, bases, attrs):
        fields = {}
        for base in reversed(bases):
            fields.update(getattr(base, '_fields', {}))
        for k, v in list(attrs.items()):
            if isinstance(v, Parameter):
                fields[k] = v
                del attrs[k]
        attrs['_fields'] = fields
        return super(ModelType, cls).__new__(cls, name, bases, attrs)


class Model(object, metaclass=ModelType):
    """
    Validated configuration model.

    All keyword arguments are checked against the parameters declared on the class and stored as
    instance attributes of the same name. Unknown keywords are rejected. Subclasses can override
    :meth:`clean` to enforce rules that involve several fields.
    """

    _fields: Dict[str, Parameter]

    def __init__(self, **kwargs):
        unknown = [k for k in kwargs if k not in self._fields]
        if unknown:
            raise ValidationError(unknown[0], 'unknown field')
        for name, field in self._fields.items():
            setattr(self, name, field.validate(name, kwargs.get(name)))
        self.clean()

    def clean(self):
        """Cross-field validation hook, raise ValidationError on problems."""

    def to_dict(self) -> Dict[str, Any]:
        """Field values in declaration order, nested models expanded."""
        info = {}
        for name in self._fields:
            value = getattr(self, name)
            info[name] = value.to_dict() if isinstance(value, Model) else value
        return info

    def replace(self, **changes):
        """Return a new validated instance with some fields changed."""
        info = self.to_dict()
        info.update(changes)
        return self.__class__(**info)

    def key(self) -> str:
        """Stable text identity built from all field values."""
        return ','.join(f'{k}={v!r}' for k, v in self.to_dict().items())

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash((type(self).__name__, self.key()))

    def __repr__(self):
        return f'{self.__class__.__name__}({self.key()})'
