"""Shared test utilities: random expression trees and an mpmath reference."""

from __future__ import annotations

import random

import mpmath as mp

from bifh.expr import BinOp, Call, Const, Neg, Pow, Var

S_LO, S_HI = 0.2, 1.2


def random_ast(rng: random.Random, depth: int = 3):
    """A random expression in ``s`` that is smooth and finite on [0.2, 1.2].

    Divisions, logarithms, roots and fractional powers only ever act on
    subtrees of the form ``1 + g^2`` or ``2 + sin(g)``, which stay bounded
    away from zero, and exponentials act on ``sin(g)`` so nothing blows up.
    """
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.6:
            return Var("s")
        return Const(round(rng.uniform(0.1, 3.0), 3))
    g = random_ast(rng, depth - 1)
    positive = (BinOp("+", Const(1.0), Pow(g, 2)) if rng.random() < 0.5
                else BinOp("+", Const(2.0), Call("sin", g)))
    kind = rng.choice(["add", "sub", "mul", "div", "neg", "sin", "cos", "exp",
                       "log", "sqrt", "ipow", "fpow"])
    if kind in ("add", "sub", "mul"):
        op = {"add": "+", "sub": "-", "mul": "*"}[kind]
        return BinOp(op, g, random_ast(rng, depth - 1))
    if kind == "div":
        return BinOp("/", random_ast(rng, depth - 1), positive)
    if kind == "neg":
        return Neg(g)
    if kind in ("sin", "cos"):
        return Call(kind, g)
    if kind == "exp":
        return Call("exp", Call("sin", g))
    if kind in ("log", "sqrt"):
        return Call(kind, positive)
    if kind == "ipow":
        return Pow(g, rng.choice([2, 3]))
    return Pow(positive, rng.choice([-3, -1, 1, 3]), rng.choice([2, 4]))


def mp_eval(node, s):
    """Evaluate a tree with mpmath at the current working precision."""
    if isinstance(node, Const):
        return mp.mpf(node.value)
    if isinstance(node, Var):
        return s
    if isinstance(node, Neg):
        return -mp_eval(node.arg, s)
    if isinstance(node, BinOp):
        a, b = mp_eval(node.left, s), mp_eval(node.right, s)
        return {"+": a + b, "-": a - b, "*": a * b}[node.op] if node.op != "/" else a / b
    if isinstance(node, Call):
        return getattr(mp, node.func)(mp_eval(node.arg, s))
    return mp.power(mp_eval(node.base, s), mp.mpf(node.num) / node.den)


def mp_derivatives(node, s: float, dps: int = 40):
    """Value and first three derivatives by mpmath's high-order differences."""
    with mp.workdps(dps):
        x = mp.mpf(s)
        return [float(mp.diff(lambda t: mp_eval(node, t), x, k)) for k in range(4)]
