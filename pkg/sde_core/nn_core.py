"""
Small feed-forward network with hand-written reverse-mode gradients and Adam,
enough to train the per-slot noise predictors.
"""

import base64
import numpy as np

from dataclasses import dataclass, replace
from typing import List

from sde_core import util
from sde_core.util import ValidationError, NumericError, DataIOError

FORMAT_VERSION = 1
DEFAULT_ACTIVATION = 'silu'


def _sigmoid(x):

  return 0.5 * (1.0 + np.tanh(0.5 * x))


def _silu(x):

  return x * _sigmoid(x)


def _silu_deriv(x):

  s = _sigmoid(x)
  return s * (1.0 + x * (1.0 - s))


def _relu(x):

  return np.maximum(x, 0.0)


def _relu_deriv(x):

  return (x > 0.0).astype(float)


ACTIVATIONS = {'silu': (_silu, _silu_deriv),
               'relu': (_relu, _relu_deriv)}


@dataclass(frozen=True, eq=False)
class Mlp:

  layer_dims: tuple
  activation: str
  weights: tuple
  biases: tuple

  def __post_init__(self):
    dims = tuple(int(x) for x in self.layer_dims)

    if len(dims) < 2 or min(dims) < 1:
      raise ValidationError('Network needs >= 2 positive layer sizes (%s given)' % (dims,))

    if self.activation not in ACTIVATIONS:
      raise ValidationError('Unknown activation "%s"; use one of %s' % (self.activation, ', '.join(sorted(ACTIVATIONS))))

    if len(self.weights) != len(dims)-1 or len(self.biases) != len(dims)-1:
      raise ValidationError('Network has %d layers but %d weights and %d biases' % (len(dims)-1, len(self.weights), len(self.biases)))

    weights = []
    biases = []

    for i, (w, b) in enumerate(zip(self.weights, self.biases)):
      w = np.array(w, dtype=np.float64)
      b = np.array(b, dtype=np.float64)

      if w.shape != (dims[i+1], dims[i]) or b.shape != (dims[i+1],):
        raise ValidationError('Layer %d parameter shapes %s, %s do not match dims %s' % (i, w.shape, b.shape, dims))

      if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
        raise NumericError('Layer %d has non-finite parameters' % i)

      w.setflags(write=False)
      b.setflags(write=False)
      weights.append(w)
      biases.append(b)

    object.__setattr__(self, 'layer_dims', dims)
    object.__setattr__(self, 'weights', tuple(weights))
    object.__setattr__(self, 'biases', tuple(biases))

  @property
  def n_layers(self):

    return len(self.weights)

  @property
  def in_dim(self):

    return self.layer_dims[0]

  @property
  def out_dim(self):

    return self.layer_dims[-1]

  def params(self):
    """Parameters in layer order, weights before biases: [W0, b0, W1, b1, ...]"""

    out = []
    for w, b in zip(self.weights, self.biases):
      out += [w, b]

    return out


@dataclass
class AdamState:

  first_moment: List[np.ndarray]
  second_moment: List[np.ndarray]
  step_count: int = 0
  learning_rate: float = 1e-3
  beta1: float = 0.9
  beta2: float = 0.999
  epsilon: float = 1e-8


def mlp_init(layer_dims, activation=DEFAULT_ACTIVATION, seed=0):

  if not layer_dims:
    raise ValidationError('Network layer sizes cannot be empty')

  dims = [int(x) for x in layer_dims]

  if len(dims) < 2 or min(dims) < 1:
    raise ValidationError('Network needs >= 2 positive layer sizes (%s given)' % (dims,))

  rng = util.rng_stream(seed)
  weights = []
  biases = []

  for fan_in, fan_out in zip(dims[:-1], dims[1:]):
    weights.append(rng.standard_normal((fan_out, fan_in)) * np.sqrt(2.0/fan_in))
    biases.append(np.zeros(fan_out))

  return Mlp(tuple(dims), activation, tuple(weights), tuple(biases))


def mlp_with_params(net, params):

  return replace(net, weights=tuple(params[0::2]), biases=tuple(params[1::2]))


def _as_batch(net, inputs):

  x = np.asarray(inputs, dtype=np.float64)
  single = x.ndim == 1

  if single:
    x = x[None,:]

  if x.ndim != 2 or x.shape[1] != net.in_dim:
    raise ValidationError('Network input has shape %s; expected (..., %d)' % (np.shape(inputs), net.in_dim))

  return x, single


def _forward_cache(net, x):

  act, _ = ACTIVATIONS[net.activation]
  pre_acts = []
  acts = [x]
  h = x

  for i in range(net.n_layers):
    z = h @ net.weights[i].T + net.biases[i]

    if i < net.n_layers-1:
      pre_acts.append(z)
      h = act(z)
      acts.append(h)

    else:
      h = z

  return h, pre_acts, acts


def mlp_forward(net, inputs):

  x, single = _as_batch(net, inputs)
  out = _forward_cache(net, x)[0]

  return out[0] if single else out


def mlp_loss_grad(net, batch_inputs, batch_targets):
  """
  Mean over the batch of squared error norms, and its exact gradients
  in params() order.
  """

  x, single = _as_batch(net, batch_inputs)
  y = np.asarray(batch_targets, dtype=np.float64).reshape(len(x), -1)

  if y.shape[1] != net.out_dim:
    raise ValidationError('Targets have width %d; network output is %d' % (y.shape[1], net.out_dim))

  if np.isnan(x).any() or np.isnan(y).any():
    raise NumericError('NaN found in network training batch')

  _, act_deriv = ACTIVATIONS[net.activation]
  out, pre_acts, acts = _forward_cache(net, x)
  resid = out - y
  n = len(x)
  loss = float((resid * resid).sum() / n)

  grads = [None] * (2 * net.n_layers)
  delta = 2.0 * resid / n

  for i in range(net.n_layers-1, -1, -1):
    grads[2*i] = delta.T @ acts[i]
    grads[2*i+1] = delta.sum(axis=0)

    if i > 0:
      delta = (delta @ net.weights[i]) * act_deriv(pre_acts[i-1])

  return loss, grads


def mlp_grad(net, batch_inputs, batch_targets):

  return mlp_loss_grad(net, batch_inputs, batch_targets)[1]


def adam_init(params, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):

  return AdamState([np.zeros_like(p) for p in params],
                   [np.zeros_like(p) for p in params],
                   0, learning_rate, beta1, beta2, epsilon)


def adam_step(params, grads, state):
  """
  One bias-corrected Adam update; returns new parameter arrays and a new state.
  """

  if len(params) != len(grads) or len(params) != len(state.first_moment):
    raise ValidationError('Adam parameter, gradient and moment lists differ in length')

  step = state.step_count + 1
  b1 = state.beta1
  b2 = state.beta2
  corr1 = 1.0 - b1**step
  corr2 = 1.0 - b2**step

  new_params = []
  new_m = []
  new_v = []

  for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
    g = np.asarray(g, dtype=np.float64)

    if g.shape != np.shape(p):
      raise ValidationError('Gradient shape %s does not match parameter shape %s' % (g.shape, np.shape(p)))

    m = b1 * m + (1.0 - b1) * g
    v = b2 * v + (1.0 - b2) * g * g
    m_hat = m / corr1
    v_hat = v / corr2

    new_params.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
    new_m.append(m)
    new_v.append(v)

  return new_params, replace(state, first_moment=new_m, second_moment=new_v, step_count=step)


def mlp_to_dict(net):

  blob = np.concatenate([p.ravel() for p in net.params()]).astype('<f8')

  return {'format_version': FORMAT_VERSION,
          'layer_dims': list(net.layer_dims),
          'activation': net.activation,
          'params': base64.b64encode(blob.tobytes()).decode('ascii')}


def mlp_from_dict(head):

  try:
    version = int(head['format_version'])
    dims = [int(x) for x in head['layer_dims']]
    activation = head['activation']
    blob = base64.b64decode(head['params'])

  except (KeyError, TypeError, ValueError) as err:
    raise DataIOError('Malformed network checkpoint: %s' % err)

  if version != FORMAT_VERSION:
    raise DataIOError('Unsupported network checkpoint version %d' % version)

  vals = np.frombuffer(blob, dtype='<f8').astype(np.float64)
  n_expect = sum(a*b + b for a, b in zip(dims[:-1], dims[1:]))

  if len(vals) != n_expect:
    raise DataIOError('Network checkpoint holds %d values, expected %d' % (len(vals), n_expect))

  weights = []
  biases = []
  i = 0

  for fan_in, fan_out in zip(dims[:-1], dims[1:]):
    weights.append(vals[i:i+fan_in*fan_out].reshape(fan_out, fan_in))
    i += fan_in * fan_out
    biases.append(vals[i:i+fan_out])
    i += fan_out

  return Mlp(tuple(dims), activation, tuple(weights), tuple(biases))


def save_checkpoint(net, file_path):

  return util.write_json(file_path, mlp_to_dict(net))


def load_checkpoint(file_path):

  return mlp_from_dict(util.read_json(file_path))
