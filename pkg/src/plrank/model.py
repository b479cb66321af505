"""Linear and sigmoid-MLP scoring functions trained by plain gradient ascent."""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .core import DataError, NumericalError

CHECKPOINT_SCHEMA = 'plrank.checkpoint/1'
ARCHITECTURES = ('linear', 'mlp')


@dataclass(frozen=True)
class ScorerConfig:
    architecture: str = 'mlp'
    hidden_sizes: tuple = (32, 32)
    init_seed: int = 0
    learning_rate: float = 0.01

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError('architecture must be one of %s' % (ARCHITECTURES,))
        hidden = tuple(int(h) for h in self.hidden_sizes)
        if self.architecture == 'mlp' and (not hidden or min(hidden) < 1):
            raise ValueError('hidden sizes must be positive')
        if not self.learning_rate > 0:
            raise ValueError('learning_rate must be > 0')
        object.__setattr__(self, 'hidden_sizes', hidden)


@dataclass
class Scorer:
    """A scoring function f with its parameters, as an ordered name -> array map."""

    config: ScorerConfig
    n_features: int
    params: dict = field(repr=False)

    def score(self, features):
        with np.errstate(over='ignore', invalid='ignore'):
            scores, _ = self._forward(self._check(features))
        if not np.all(np.isfinite(scores)):
            raise NumericalError('scorer produced non-finite scores')
        return scores

    def _check(self, features):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.n_features:
            raise ValueError('expected a D x %d feature matrix, got shape %s'
                             % (self.n_features, features.shape))
        return features

    def _forward(self, x):
        if self.config.architecture == 'linear':
            return x @ self.params['w'], None
        activations = [x]
        for i in range(1, len(self.config.hidden_sizes) + 1):
            x = expit(x @ self.params['W%d' % i] + self.params['b%d' % i])
            activations.append(x)
        return x @ self.params['w_out'] + self.params['b_out'][0], activations

    def parameter_gradient(self, features, item_gradient):
        """d/dw of sum_d item_gradient[d] * f(d), by backpropagation."""
        x = self._check(features)
        g = np.asarray(item_gradient, dtype=np.float64)
        if g.shape != (x.shape[0],):
            raise ValueError('item gradient has %d entries for %d items'
                             % (g.size, x.shape[0]))
        if self.config.architecture == 'linear':
            return {'w': g @ x}
        _, activations = self._forward(x)
        n_hidden = len(self.config.hidden_sizes)
        grads = {'w_out': g @ activations[-1], 'b_out': np.array([g.sum()])}
        delta = np.outer(g, self.params['w_out'])
        for i in range(n_hidden, 0, -1):
            h = activations[i]
            delta = delta * h * (1.0 - h)
            grads['W%d' % i] = activations[i - 1].T @ delta
            grads['b%d' % i] = delta.sum(axis=0)
            if i > 1:
                delta = delta @ self.params['W%d' % i].T
        return {name: grads[name] for name in self.params}


def init_scorer(config, n_features):
    """Glorot-uniform weights, zero biases, seeded by ``config.init_seed``."""
    if n_features < 1:
        raise ValueError('need at least one feature')
    rng = np.random.default_rng(config.init_seed)

    def glorot(fan_in, fan_out, shape):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape)

    if config.architecture == 'linear':
        params = {'w': glorot(n_features, 1, n_features)}
    else:
        params = {}
        fan_in = n_features
        for i, width in enumerate(config.hidden_sizes, start=1):
            params['W%d' % i] = glorot(fan_in, width, (fan_in, width))
            params['b%d' % i] = np.zeros(width)
            fan_in = width
        params['w_out'] = glorot(fan_in, 1, fan_in)
        params['b_out'] = np.zeros(1)
    return Scorer(config, n_features, params)


def apply_gradient(scorer, features, item_gradient, learning_rate=None):
    """One ascent step: w += lr * sum_d item_gradient[d] * grad_w f(d).

    Returns a new Scorer; the input is left untouched.
    """
    lr = scorer.config.learning_rate if learning_rate is None else learning_rate
    grads = scorer.parameter_gradient(features, item_gradient)
    params = {}
    for name, value in scorer.params.items():
        with np.errstate(over='ignore', invalid='ignore'):
            updated = value + lr * grads[name]
        if not np.all(np.isfinite(updated)):
            raise NumericalError('non-finite update in layer %s' % name)
        params[name] = updated
    return Scorer(scorer.config, scorer.n_features, params)


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-scoring fitted on a training split; constant features dropped."""

    mean: np.ndarray
    scale: np.ndarray
    keep: np.ndarray

    @classmethod
    def fit(cls, feature_matrices):
        stacked = np.concatenate([np.asarray(m, dtype=np.float64)
                                  for m in feature_matrices])
        mean = stacked.mean(axis=0)
        std = stacked.std(axis=0)
        keep = std > 1e-12 * np.maximum(1.0, np.abs(mean))
        return cls(mean, np.where(keep, std, 1.0), keep)

    @property
    def n_input(self):
        return self.mean.size

    @property
    def n_output(self):
        return int(self.keep.sum())

    def __call__(self, features):
        features = np.asarray(features, dtype=np.float64)
        if features.shape[-1] != self.n_input:
            raise DataError('feature count %d does not match the %d features the '
                            'standardizer was fitted on'
                            % (features.shape[-1], self.n_input))
        return ((features - self.mean) / self.scale)[:, self.keep]


def checkpoint_dict(scorer, standardizer=None):
    out = {
        'schema': CHECKPOINT_SCHEMA,
        'architecture': scorer.config.architecture,
        'hidden_sizes': list(scorer.config.hidden_sizes),
        'init_seed': scorer.config.init_seed,
        'learning_rate': scorer.config.learning_rate,
        'n_features': scorer.n_features,
        'params': [{'name': name, 'shape': list(value.shape),
                    'values': value.ravel().tolist()}
                   for name, value in scorer.params.items()],
    }
    if standardizer is not None:
        out['standardizer'] = {'mean': standardizer.mean.tolist(),
                               'scale': standardizer.scale.tolist(),
                               'keep': standardizer.keep.astype(int).tolist()}
    return out


def save_checkpoint(path, scorer, standardizer=None):
    with open(path, 'w') as f:
        json.dump(checkpoint_dict(scorer, standardizer), f, sort_keys=True)
        f.write('\n')


def load_checkpoint(path):
    """Return (scorer, standardizer or None) from a JSON checkpoint."""
    with open(path) as f:
        data = json.load(f)
    if data.get('schema') != CHECKPOINT_SCHEMA:
        raise DataError('%s: unsupported checkpoint schema %r'
                        % (path, data.get('schema')))
    config = ScorerConfig(architecture=data['architecture'],
                          hidden_sizes=tuple(data['hidden_sizes']),
                          init_seed=data['init_seed'],
                          learning_rate=data['learning_rate'])
    params = {p['name']: np.array(p['values'], dtype=np.float64).reshape(p['shape'])
              for p in data['params']}
    expected = init_scorer(config, data['n_features']).params
    if list(params) != list(expected) or any(params[k].shape != expected[k].shape
                                             for k in params):
        raise DataError('%s: parameter shapes do not match the architecture' % path)
    standardizer = None
    if 'standardizer' in data:
        s = data['standardizer']
        standardizer = Standardizer(np.array(s['mean']), np.array(s['scale']),
                                    np.array(s['keep'], dtype=bool))
    return Scorer(config, data['n_features'], params), standardizer
