import pytest

from dlrgrid.schema_format import ValidateFormat, get_validate_format, parse_ratio


class TestSchemaFormat:
    def test_create_format_validator_class_ok(self):
        class NewValidator(ValidateFormat):
            def validate(self, value):
                pass
        assert NewValidator()

    def test_create_format_validator_class_raise_error_when_missing_validate_method(self):
        class NewValidator(ValidateFormat):
            pass

        with pytest.raises(NotImplementedError):
            NewValidator().validate(1)

    def test_get_existing_validator_ok(self):
        assert get_validate_format('number', 'probability')

    def test_get_non_existing_validator_return_none(self):
        assert not get_validate_format('string', 'non_exist')
        assert not get_validate_format('boolean', 'probability')

    @pytest.mark.parametrize('value', [0.01, 0.5, 0.99])
    def test_validate_format_probability(self, value):
        get_validate_format('number', 'probability')().validate(value)

    @pytest.mark.parametrize('value', [0.0, 1.0, -0.2, 1.5])
    def test_validate_format_probability_raises_error_outside_the_open_interval(self, value):
        with pytest.raises(ValueError):
            get_validate_format('number', 'probability')().validate(value)

    def test_validate_format_positive(self):
        get_validate_format('integer', 'positive')().validate(3)

        with pytest.raises(ValueError):
            get_validate_format('integer', 'positive')().validate(0)

        with pytest.raises(ValueError):
            get_validate_format('number', 'positive')().validate(float('inf'))

    def test_validate_format_non_negative(self):
        get_validate_format('number', 'non-negative')().validate(0.0)

        with pytest.raises(ValueError):
            get_validate_format('number', 'non-negative')().validate(-1e-9)

    def test_validate_format_date(self):
        get_validate_format('string', 'date')().validate('2021-06-01')

        with pytest.raises(ValueError):
            get_validate_format('string', 'date')().validate('01/06/2021')

    def test_validate_format_levels(self):
        get_validate_format('array', 'levels')().validate([0.05, 0.5, 0.95])

        with pytest.raises(ValueError):
            get_validate_format('array', 'levels')().validate([0.5, 0.05])

        with pytest.raises(ValueError):
            get_validate_format('array', 'levels')().validate([0.5, 0.5])

        with pytest.raises(ValueError):
            get_validate_format('array', 'levels')().validate([0.5, 1.0])

    def test_parse_ratio(self):
        assert parse_ratio('4:1') == (4, 1)
        assert parse_ratio(' 3 : 2 ') == (3, 2)

    @pytest.mark.parametrize('value', ['4', '0:1', '4:-1', 'a:b', '4:1:1'])
    def test_parse_ratio_raises_error_when_value_is_not_a_ratio(self, value):
        with pytest.raises(ValueError):
            parse_ratio(value)
