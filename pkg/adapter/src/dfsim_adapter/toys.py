"""Bundled toy models for adapter tests and demos.

Each torch factory returns (module, example input shapes) so it can be named
on the dfsim-extract command line as `toys.py:<factory>`.
"""

from __future__ import annotations


def make_tiny_mlp():
    """Three-op toy: input placeholder, linear layer, relu."""
    import torch
    import torch.nn as nn

    class TinyMLP(nn.Module):
        def __init__(self):
            super().__init__()
            self.fc = nn.Linear(10, 4)

        def forward(self, x):
            return torch.relu(self.fc(x))

    return TinyMLP(), [(32, 10)]


def make_tiny_cnn():
    """Small convolutional toy: two conv/relu blocks, flatten, classifier."""
    import torch
    import torch.nn as nn

    class TinyCNN(nn.Module):
        def __init__(self):
            super().__init__()
            self.conv1 = nn.Conv2d(3, 8, kernel_size=3, stride=1, padding=1)
            self.conv2 = nn.Conv2d(8, 16, kernel_size=3, stride=1, padding=1)
            self.pool = nn.MaxPool2d(2)
            self.head = nn.Linear(16 * 8 * 8, 10)

        def forward(self, x):
            x = torch.relu(self.conv1(x))
            x = self.pool(x)
            x = torch.relu(self.conv2(x))
            x = torch.flatten(x, 1)
            return self.head(x)

    return TinyCNN(), [(4, 3, 16, 16)]


def make_dynamic():
    """Contains a data-dependent-shape op (nonzero); exercises the drop path."""
    import torch
    import torch.nn as nn

    class Dynamic(nn.Module):
        def forward(self, x):
            y = torch.relu(x)
            picked = torch.nonzero(y)
            return picked.float().sum() + y.sum()

    return Dynamic(), [(4, 4)]


def build_tf_toy_graph():
    """matmul/relu toy as a v1-style graph; returns the tf.Graph."""
    import tensorflow as tf

    graph = tf.Graph()
    with graph.as_default():
        x = tf.compat.v1.placeholder(tf.float32, [32, 10], name="x")
        w = tf.constant(0.1, shape=[10, 4], dtype=tf.float32, name="w")
        y = tf.matmul(x, w, name="mm")
        tf.nn.relu(y, name="act")
    return graph


def build_tf_dynamic_graph():
    """Toy with a data-dependent Where op; exercises the drop path."""
    import tensorflow as tf

    graph = tf.Graph()
    with graph.as_default():
        x = tf.compat.v1.placeholder(tf.float32, [8, 8], name="x")
        mask = tf.greater(x, 0.0, name="mask")
        hits = tf.where(mask, name="hits")
        tf.reduce_sum(tf.cast(hits, tf.float32, name="asfloat"), name="total")
    return graph
