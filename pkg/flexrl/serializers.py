from rest_framework import serializers

from .conf import flexrl_setting
from .divergences import LpMode, parse_divergence
from .exceptions import FlexRLError
from .mdp import MIXTURES, DatasetRequest
from .models import ResultRow
from .trainers import Algorithm, TrainConfig


class ResultRowSerializer(serializers.ModelSerializer):
    class Meta:
        model = ResultRow
        fields = [
            'id', 'env', 'mixture', 'algorithm', 'divergence', 'seed', 'final_return',
            'final_norm_return', 'steps', 'metrics_path', 'checkpoint_path', 'created'
        ]
        read_only_fields = fields


class ResultSummarySerializer(serializers.Serializer):
    env = serializers.CharField()
    mixture = serializers.CharField()
    algorithm = serializers.CharField()
    divergence = serializers.CharField()
    mean_norm_return = serializers.FloatField()
    std_norm_return = serializers.FloatField()
    min_norm_return = serializers.FloatField()
    max_norm_return = serializers.FloatField()
    seeds = serializers.IntegerField()


class PairField(serializers.ListField):
    """Two floats, given as a list or as the text ``low,high``."""
    child = serializers.FloatField()

    def __init__(self, **kwargs):
        super().__init__(min_length=2, max_length=2, **kwargs)

    def to_internal_value(self, data):
        if isinstance(data, str):
            data = [part.strip() for part in data.split(',')]
        return tuple(super().to_internal_value(data))


def _choice(value, choices, what):
    normalized = str(value).strip().lower().replace('-', '_')
    if normalized not in choices:
        raise serializers.ValidationError(f"unknown {what} {value!r}; choose from {', '.join(choices)}")
    return normalized


class TrainConfigSerializer(serializers.Serializer):
    """
    Validates training options from the command line or a config file and
    turns them into a TrainConfig. Unset lp_mode, alpha_g and adaptive
    settings come from the FLEXRL settings.
    """
    algorithm = serializers.CharField(default=Algorithm.FLEX_F_Q.value)
    divergence = serializers.CharField(default='chi2')
    alpha_minus = serializers.FloatField(default=1.0)
    alpha_plus = serializers.FloatField(default=1.0)
    beta = serializers.FloatField(default=1.0)
    lp_mode = serializers.CharField(default=None, allow_null=True)
    alpha_g = serializers.FloatField(default=None, allow_null=True)
    lr_nu = serializers.FloatField(default=1e-2)
    lr_critic = serializers.FloatField(default=1e-2)
    lr_policy = serializers.FloatField(default=1e-2)
    batch_size = serializers.IntegerField(min_value=1, default=512)
    steps = serializers.IntegerField(min_value=0, default=10000)
    awr_temperature = serializers.FloatField(default=3.0)
    reward_scale = serializers.FloatField(default=1.0)
    seed = serializers.IntegerField(min_value=0, default=0)
    adaptive = serializers.BooleanField(default=False)
    iota_b = serializers.FloatField(default=None, allow_null=True)
    ema_decay = serializers.FloatField(default=None, allow_null=True)
    e_clip = PairField(default=None, allow_null=True)
    clip_e = serializers.BooleanField(default=False)
    eval_interval = serializers.IntegerField(min_value=1, default=1000)
    eval_episodes = serializers.IntegerField(min_value=1, default=20)
    eval_horizon = serializers.IntegerField(min_value=1, default=100)

    def validate_algorithm(self, value):
        return _choice(value, Algorithm.values, 'algorithm')

    def validate_lp_mode(self, value):
        return None if value is None else _choice(value, LpMode.values, 'lp_mode')

    def validate(self, attrs):
        try:
            flex = parse_divergence(attrs.pop('divergence'), attrs.pop('alpha_minus'),
                                    attrs.pop('alpha_plus'), attrs.pop('beta'))
        except FlexRLError as err:
            raise serializers.ValidationError({'divergence': str(err)})

        defaults = flexrl_setting('TRAIN_DEFAULTS').get(attrs['algorithm'], {})
        adaptive_defaults = flexrl_setting('ADAPTIVE_DEFAULTS')
        for name in ('lp_mode', 'alpha_g'):
            if attrs[name] is None:
                attrs[name] = defaults.get(name)
        for name in ('iota_b', 'ema_decay', 'e_clip'):
            if attrs[name] is None:
                attrs[name] = adaptive_defaults[name]
        try:
            attrs['config'] = TrainConfig(flex=flex, **attrs)
        except FlexRLError as err:
            raise serializers.ValidationError(str(err))
        return attrs

    def to_config(self):
        return self.validated_data['config']


class DatasetRequestSerializer(serializers.Serializer):
    env = serializers.RegexField(r'^grid\d+(x\d+)?$', error_messages={'invalid': 'use gridN or gridWxH'})
    mixture = serializers.ChoiceField(choices=sorted(MIXTURES))
    seed = serializers.IntegerField(min_value=0, default=0)
    n_trajectories = serializers.IntegerField(min_value=1, default=None, allow_null=True)
    horizon = serializers.IntegerField(min_value=1, default=None, allow_null=True)
    gamma = serializers.FloatField(min_value=0.0, default=None, allow_null=True)
    noise = serializers.FloatField(min_value=0.0, max_value=1.0, default=None, allow_null=True)

    def validate_noise(self, value):
        if value is not None and not value < 1.0:
            raise serializers.ValidationError("noise must be below 1")
        return value

    def validate_gamma(self, value):
        if value is not None and not value < 1.0:
            raise serializers.ValidationError("gamma must be below 1")
        return value

    def validate(self, attrs):
        defaults = flexrl_setting('DATASET_DEFAULTS')
        for name in ('n_trajectories', 'horizon', 'gamma', 'noise'):
            if attrs[name] is None:
                attrs[name] = defaults[name]
        if attrs['n_trajectories'] < len(MIXTURES[attrs['mixture']]):
            raise serializers.ValidationError(
                {'n_trajectories': f"mixture {attrs['mixture']} needs one trajectory per component"})
        return attrs

    def to_request(self):
        return DatasetRequest(**self.validated_data)
