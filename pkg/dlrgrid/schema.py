import inspect
from copy import deepcopy

from dlrgrid.constants import TypeConfig
from dlrgrid.exceptions import SchemaAlreadyExist
from dlrgrid.schema_format import get_validate_format

REGISTRY_SCHEMA = {}


class ValidationError(ValueError):
    pass


def register_schema(target_class):
    if target_class.__name__ in REGISTRY_SCHEMA:
        raise SchemaAlreadyExist(target_class.__name__)
    REGISTRY_SCHEMA[target_class.__name__] = target_class


def is_schema(obj):
    return inspect.isclass(obj) and issubclass(obj, Schema)


class Schema(dict):
    """Declarative validator for JSON documents.

    Subclasses declare ``type``, ``properties`` and optionally ``required``; instantiating
    a subclass with keyword arguments validates them, fills declared defaults and keeps the
    result as a plain dict. Properties are either dicts (``type``, ``format``, ``enum``,
    ``nullable``, ``default``, ``items``) or other Schema subclasses.
    """
    type = None
    properties = None
    required = ()

    def __init_subclass__(cls, **kwargs):
        register_schema(cls)
        super().__init_subclass__(**kwargs)
        if cls.properties is not None and type(cls.properties) is not dict:
            raise TypeError(f"Attribute 'properties' must be a 'dict', but was {type(cls.properties)}")
        if type(cls.required) not in [list, set, tuple]:
            raise TypeError(f"Attribute 'required' must be 'list', 'set' or 'tuple', but was {type(cls.required)}")

        properties = {}
        required = set()
        for super_class in reversed(cls.__mro__[1:]):
            if not is_schema(super_class) or super_class is Schema:
                continue
            if super_class.type != 'object':
                raise TypeError("You can inherit only schema of type 'object'")
            properties = cls.update_properties(properties, super_class.properties or {})
            required.update(super_class.required)

        if cls.properties:
            properties = cls.update_properties(properties, cls.properties)
        required.update(cls.required)

        if properties:
            cls.properties = properties
            if cls.type is None:
                cls.type = 'object'
        cls.required = sorted(required)
        cls.check_schema_type()

    def __init__(self, **kwargs):
        super().__init__()
        properties = self.properties or {}

        for k, v in kwargs.items():
            if k not in properties:
                raise ValidationError(f'The model "{self.__class__.__name__}" does not have an attribute "{k}"')
            self[k] = self.validate_value(k, properties[k], v)

        for k, prop in properties.items():
            if k in self:
                continue
            if is_schema(prop):
                if prop.type == 'object' and not prop.required:
                    self[k] = prop()
            elif 'default' in prop:
                self[k] = deepcopy(prop['default'])

        for key in self.required:
            if key not in kwargs:
                raise ValidationError(f'The attribute "{key}" is required')

    @classmethod
    def validate_value(cls, key, prop, value):
        if is_schema(prop):
            if prop.type == 'object':
                if not isinstance(value, dict):
                    raise ValidationError(f'The attribute "{key}" must be an object, but was "{type(value)}"')
                return prop(**value)
            prop = prop.definitions()

        if prop.get('nullable', False) and value is None:
            return value

        type_ = prop.get('type', None)
        cls.check_type(type_, key, value)

        if 'enum' in prop:
            if type(prop['enum']) not in [set, list, tuple]:
                raise TypeError(f"'enum' must be 'list', 'set' or 'tuple', but was {type(prop['enum'])}")
            if value not in prop['enum']:
                raise ValidationError(f"{key} must be one of {', '.join(map(str, prop['enum']))} but was {value}")

        if type_ == 'array' and 'items' in prop:
            value = [cls.validate_value(key, prop['items'], item) for item in value]

        cls.check_format(key, type_, prop.get('format', None), value)
        return value

    @classmethod
    def check_schema_type(cls):
        if cls.type == 'object' and not cls.properties:
            raise TypeError("Attribute properties cannot be None when schema type is object")
        if cls.type == 'array':
            items = getattr(cls, 'items', None)
            if not (type(items) is dict or is_schema(items)):
                raise TypeError(f"Attribute items must be of type dict or a subclass of Schema, but was {type(items)}")

    @staticmethod
    def update_properties(original, new):
        updated = deepcopy(original)
        for prop, definition in new.items():
            if prop in updated and not is_schema(definition) and not is_schema(updated[prop]):
                old_type = updated[prop].get('type')
                if 'type' in definition and old_type and definition['type'] != old_type:
                    raise TypeError("You can't alter type of properties in sub schema")
                merged = dict(updated[prop])
                merged.update(definition)
                updated[prop] = merged
            else:
                updated[prop] = definition
        return updated

    @staticmethod
    def check_type(type_, key, value):
        if not type_:
            return
        if type_ == TypeConfig.list and not isinstance(value, list):
            raise ValidationError(f'The attribute "{key}" must be a list, but was "{type(value)}"')
        if type_ == TypeConfig.dict and not isinstance(value, dict):
            raise ValidationError(f'The attribute "{key}" must be an object, but was "{type(value)}"')
        if type_ == TypeConfig.int and (isinstance(value, bool) or not isinstance(value, int)):
            raise ValidationError(f'The attribute "{key}" must be an int, but was "{type(value)}"')
        if type_ == TypeConfig.float and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ValidationError(f'The attribute "{key}" must be an int or float, but was "{type(value)}"')
        if type_ == TypeConfig.str and not isinstance(value, str):
            raise ValidationError(f'The attribute "{key}" must be a string, but was "{type(value)}"')
        if type_ == TypeConfig.bool and not isinstance(value, bool):
            raise ValidationError(f'The attribute "{key}" must be a bool, but was "{type(value)}"')

    @staticmethod
    def check_format(key, type_, format_, value):
        validator = get_validate_format(type_, format_)
        if validator:
            try:
                validator().validate(value)
            except ValueError as e:
                raise ValidationError(f'The attribute "{key}" is invalid. {e}') from e

    @classmethod
    def definitions(cls):
        return {k: v for k, v in cls.__dict__.items() if not k.startswith('_') and not callable(v)
                and not isinstance(v, (classmethod, staticmethod))}

    @classmethod
    def array(cls):
        return {'type': 'array', 'items': cls}

    @classmethod
    def example(cls):
        """Document filled with declared defaults, used to write template config files."""
        if cls.type != 'object':
            return cls.definitions().get('default')
        example = {}
        for k, v in cls.properties.items():
            if is_schema(v):
                example[k] = v.example()
            elif 'default' in v:
                example[k] = deepcopy(v['default'])
        return example


def validate_object(obj, known_fields, object_name, required=()):
    if not isinstance(obj, dict):
        raise ValidationError(f'Invalid {object_name} object. It must be an object but was {type(obj)}')
    for k in obj:
        if k not in known_fields:
            raise ValidationError(f'Invalid {object_name} object. Unknown field "{k}"')
    for field in required:
        if field not in obj:
            raise ValidationError(f'Invalid {object_name} object. Missing field "{field}"')
