"""
The message-passing factorization network.

Each layer updates every edge embedding from the edge and its two end
nodes, averages the new edge embeddings into each node, and updates the
node embeddings. Between layers the raw matrix value is appended to each
edge embedding. The last layer emits one scalar per edge, which becomes
the corresponding entry of L (lower part, guarded diagonal) or U (strictly
upper part, unit diagonal).

All computation is written once against `tape.Tape`; inference runs the
same code on a non-recording tape.
"""
from __future__ import annotations

import collections
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .config import FORMAT_VERSION, ModelConfig, check_keys
from .data import read_json, write_json
from .exceptions import ConfigError, DataIOError, TrainingDivergenceError
from .graph import N_EDGE_FEATURES, N_NODE_FEATURES
from .precond import FactorPair
from .tape import Tape

log = logging.getLogger(__name__)

MODES = ('train', 'inference')

# W0, b0, W1, b1 of a two-affine-map perceptron
MLP_PARTS = ('W0', 'b0', 'W1', 'b1')

LayerWeights = collections.namedtuple('LayerWeights', ['edge', 'node'])


def zeta(x, eps):
    "Guarded diagonal activation, elementwise."
    return Tape(record=False).zeta(x, eps).value


def zeta_relaxed(x, eps):
    "Continuous relaxation of `zeta` used while training."
    return Tape(record=False).zeta_relaxed(x, eps).value


def mlp_on_tape(tape, weights, x, activation='relu'):
    "affine -> activation -> affine, on `tape`."
    W0, b0, W1, b1 = weights
    hidden = getattr(tape, activation)(tape.affine(x, W0, b0))
    return tape.affine(hidden, W1, b1)


def mlp_forward(weights, x, activation='relu'):
    """
    Evaluate a perceptron `(W0, b0, W1, b1)` on the rows of `x`.
    """
    return mlp_on_tape(Tape(record=False), weights, x, activation).value


def layer_on_tape(tape, graph, edge_feats, node_feats, weights,
                  activation='relu', aggregation='mean'):
    """
    One message-passing layer. `weights.node` is None for the final
    layer, whose node update would never be read.
    """
    inputs = tape.concat([edge_feats,
                          tape.gather(node_feats, graph.rows),
                          tape.gather(node_feats, graph.cols)])
    edges = mlp_on_tape(tape, weights.edge, inputs, activation)
    if weights.node is None:
        return edges, node_feats
    if aggregation == 'mean':
        messages = tape.segment_mean(edges, graph.rows, graph.n)
    else:
        messages = tape.segment_sum(edges, graph.rows, graph.n)
    nodes = mlp_on_tape(tape, weights.node,
                        tape.concat([node_feats, messages]), activation)
    return edges, nodes


def message_passing_layer(graph, edge_feats, node_feats, params_l,
                          activation='relu', aggregation='mean'):
    """
    Plain-array version of `layer_on_tape`.

    PARAMETERS
    ----------
    graph : CoatesGraph
    edge_feats : ndarray, (E, p)
    node_feats : ndarray, (n, q)
    params_l : LayerWeights
        Arrays of the edge and node perceptrons of one layer.

    RETURNS
    -------
    (edge_feats', node_feats') : (ndarray, ndarray)

    """
    tape = Tape(record=False)
    edges, nodes = layer_on_tape(tape, graph, tape.constant(edge_feats),
                                 tape.constant(node_feats), params_l,
                                 activation, aggregation)
    return edges.value, nodes.value


def _mlp_shapes(n_in, hidden, n_out):
    return {'W0': (n_in, hidden), 'b0': (hidden,),
            'W1': (hidden, n_out), 'b1': (n_out,)}


def parameter_shapes(config):
    """
    Ordered mapping from parameter name to shape for a `ModelConfig`.

    Layer 0 sees the raw features; later layers see the previous edge
    embedding plus the appended matrix value.
    """
    shapes = collections.OrderedDict()
    edge_dim, node_dim = N_EDGE_FEATURES, N_NODE_FEATURES
    for layer in range(config.layers):
        final = layer == config.layers - 1
        edge_out = 1 if final else config.edge_hidden
        edge_in = edge_dim + 2 * node_dim
        for part, shape in _mlp_shapes(edge_in, config.edge_hidden,
                                       edge_out).items():
            shapes['layer%d.edge.%s' % (layer, part)] = shape
        if final:
            break
        node_in = node_dim + edge_out
        for part, shape in _mlp_shapes(node_in, config.node_hidden,
                                       config.node_hidden).items():
            shapes['layer%d.node.%s' % (layer, part)] = shape
        edge_dim, node_dim = edge_out + 1, config.node_hidden
    return shapes


@dataclass(frozen=True, eq=False)
class ModelParams:
    """
    Weights of all layers, keyed `layer<l>.<edge|node>.<W0|b0|W1|b1>`,
    together with the `ModelConfig` that fixes their shapes.
    """
    config: ModelConfig
    arrays: dict

    def __post_init__(self):
        expected = parameter_shapes(self.config)
        check_keys(self.arrays, required=list(expected),
                   descr="model parameters")
        arrays = collections.OrderedDict()
        for name, shape in expected.items():
            value = np.array(self.arrays[name], dtype=np.float64)
            if value.shape != tuple(shape):
                raise ConfigError("parameter %s has shape %r, expected %r"
                                  % (name, value.shape, tuple(shape)))
            value.flags.writeable = False
            arrays[name] = value
        object.__setattr__(self, 'arrays', arrays)

    @classmethod
    def initialize(cls, config=None):
        """
        Uniform weights and biases in +-1/sqrt(fan_in), drawn in parameter
        order from a generator seeded with `config.seed`.
        """
        config = config or ModelConfig()
        rng = np.random.default_rng(config.seed)
        shapes = parameter_shapes(config)
        arrays = collections.OrderedDict()
        for name, shape in shapes.items():
            # b0 shares the fan-in of W0, b1 that of W1
            prefix, part = name.rsplit('.', 1)
            fan_in = shapes['%s.W%s' % (prefix, part[1])][0]
            bound = 1.0 / np.sqrt(fan_in)
            arrays[name] = rng.uniform(-bound, bound, size=shape)
        return cls(config=config, arrays=arrays)

    @property
    def eps(self):
        return self.config.eps

    @property
    def names(self):
        return list(self.arrays)

    @property
    def parameter_count(self):
        return int(sum(a.size for a in self.arrays.values()))

    def __getitem__(self, name):
        return self.arrays[name]

    def with_arrays(self, arrays):
        return ModelParams(config=self.config, arrays=arrays)

    def layer(self, layer):
        "The `LayerWeights` of one layer, as arrays."
        return _layer_weights(self.config, layer, self.arrays.__getitem__)

    def to_json(self):
        return {
            'format_version': FORMAT_VERSION,
            'eps': self.config.eps,
            'layers': self.config.layers,
            'edge_hidden': self.config.edge_hidden,
            'node_hidden': self.config.node_hidden,
            'aggregation': self.config.aggregation,
            'activation': self.config.activation,
            'seed': self.config.seed,
            'parameter_count': self.parameter_count,
            'arrays': {
                name: {'shape': list(value.shape),
                       'values': value.ravel().tolist()}
                for name, value in self.arrays.items()
            },
        }

    def save(self, path, overwrite=False):
        log.info("saving model with %d parameters to %s",
                 self.parameter_count, path)
        write_json(self.to_json(), path, overwrite=overwrite)

    @classmethod
    def from_json(cls, content, aggregation=None):
        check_keys(content, required=['format_version', 'eps', 'layers',
                                      'edge_hidden', 'node_hidden',
                                      'aggregation', 'arrays'],
                   optional=['activation', 'seed', 'parameter_count'],
                   descr="model file")
        if content['format_version'] != FORMAT_VERSION:
            raise DataIOError("unsupported model format version %r"
                              % content['format_version'])
        stored = content['aggregation']
        if aggregation is not None and aggregation != stored:
            warnings.warn("model was trained with %s aggregation, running "
                          "it with %s" % (stored, aggregation))
        config = ModelConfig.from_mapping({
            'layers': content['layers'],
            'edge_hidden': content['edge_hidden'],
            'node_hidden': content['node_hidden'],
            'eps': content['eps'],
            'aggregation': aggregation or stored,
            'activation': content.get('activation', 'relu'),
            'seed': content.get('seed', 0),
        }, descr="model file")
        arrays = {}
        for name, entry in content['arrays'].items():
            check_keys(entry, required=['shape', 'values'],
                       descr="model array %s" % name)
            arrays[name] = np.reshape(np.array(entry['values'], dtype=np.float64),
                                      entry['shape'])
        params = cls(config=config, arrays=arrays)
        if params.parameter_count != content.get('parameter_count',
                                                 params.parameter_count):
            raise DataIOError("model file declares %r parameters, found %d"
                              % (content['parameter_count'],
                                 params.parameter_count))
        return params

    @classmethod
    def load(cls, path, aggregation=None):
        params = cls.from_json(read_json(path), aggregation=aggregation)
        log.info("loaded model with %d parameters from %s",
                 params.parameter_count, path)
        return params


def _layer_weights(config, layer, lookup):
    edge = tuple(lookup('layer%d.edge.%s' % (layer, p)) for p in MLP_PARTS)
    if layer == config.layers - 1:
        return LayerWeights(edge=edge, node=None)
    node = tuple(lookup('layer%d.node.%s' % (layer, p)) for p in MLP_PARTS)
    return LayerWeights(edge=edge, node=node)


@dataclass(frozen=True, eq=False)
class TapeFactors:
    """
    Learned factors whose values live on a tape.

    `L_values` / `U_values` are tape variables aligned with the patterns
    `L_pattern` / `U_pattern`, so losses can build on them.
    """
    L_pattern: object
    U_pattern: object
    L_values: object
    U_values: object
    epsilon: float

    def to_factor_pair(self):
        return FactorPair(L=self.L_pattern.with_values(self.L_values.value),
                          U=self.U_pattern.with_values(self.U_values.value),
                          epsilon=self.epsilon)

    def apply(self, tape, v):
        "P v = L (U v), on the tape."
        return tape.spmv(self.L_pattern, self.L_values,
                         tape.spmv(self.U_pattern, self.U_values, v))


def _check_finite(var, layer, what):
    if not np.all(np.isfinite(var.value)):
        raise TrainingDivergenceError(
            "non-finite %s activation in message-passing layer %d"
            % (what, layer))


def forward_on_tape(tape, params, graph, mode='train'):
    """
    Run the network on `graph`, registering every parameter on `tape`.

    RETURNS
    -------
    factors : TapeFactors
        L is guarded by `zeta` in inference mode and by `zeta_relaxed` in
        train mode; U gets a stored unit diagonal that no parameter feeds.

    """
    if mode not in MODES:
        raise ConfigError("forward mode must be one of %r, got %r"
                          % (MODES, mode))
    config = params.config
    variables = {name: tape.parameter(name, value)
                 for name, value in params.arrays.items()}
    skip = tape.constant(graph.matrix_values[:, None])
    edges = tape.constant(graph.edge_feats)
    nodes = tape.constant(graph.node_feats)
    for layer in range(config.layers):
        weights = _layer_weights(config, layer, variables.__getitem__)
        edges, nodes = layer_on_tape(tape, graph, edges, nodes, weights,
                                     config.activation, config.aggregation)
        _check_finite(edges, layer, 'edge')
        if weights.node is not None:
            _check_finite(nodes, layer, 'node')
            edges = tape.concat([edges, skip])

    layout = graph.layout
    guard = tape.zeta if mode == 'inference' else tape.zeta_relaxed
    L_off = np.setdiff1d(np.arange(layout.lower.nnz), layout.lower_diag)
    U_off = np.setdiff1d(np.arange(layout.upper.nnz), layout.upper_diag)
    L_diag_vals = guard(tape.gather(edges, (layout.lower_edges[layout.lower_diag], 0)),
                        config.eps)
    L_off_vals = tape.gather(edges, (layout.lower_edges[L_off], 0))
    U_off_vals = tape.gather(edges, (layout.upper_edges[U_off], 0))
    L_values = tape.scatter(layout.lower.nnz,
                            [(L_off_vals, L_off), (L_diag_vals, layout.lower_diag)])
    U_values = tape.scatter(layout.upper.nnz, [(U_off_vals, U_off)],
                            fill=(layout.upper_diag, 1.0))
    return TapeFactors(L_pattern=layout.lower, U_pattern=layout.upper,
                       L_values=L_values, U_values=U_values,
                       epsilon=config.eps)


def forward(params, graph, mode='inference'):
    "Learned `FactorPair` for `graph`, without recording gradients."
    return forward_on_tape(Tape(record=False), params, graph,
                           mode).to_factor_pair()
