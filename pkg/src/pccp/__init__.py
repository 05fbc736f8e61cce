"""Concurrent constraint solving over lattices of integer cells."""
from .engine import EngineResult, Program, Status, run, run_fair, run_parallel, run_sequential
from .lattice import BDEC, BINC, INTERVAL, NEG_INF, POS_INF, ZDEC, ZINC, Lattice, Schema, Store
from .propagation import And, BoolIs, Iff, Leq, LinearLeq, Lt, Model, Not, Or, compile, compile_reified
from .solver import Limits, SolveStatus, branch, eps_decompose, solve_dfs, solve_parallel

__version__ = "0.1.0"
