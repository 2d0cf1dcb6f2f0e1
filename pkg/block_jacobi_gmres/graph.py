""" Weighted adjacency graphs of sparse matrices and balanced partitions of
    them into the diagonal blocks of a block-Jacobi preconditioner.

Examples
--------

The worked example is a path graph; a two-way partition cuts its middle edge.

>>> from block_jacobi_gmres.fixtures import worked_example
>>> A = worked_example()
>>> G = graph_from_matrix(A)
>>> G.edges()
[(0, 1, 1.5), (1, 2, 1.5), (2, 3, 2.0)]
>>> partition = partition_graph(G, 2, matrix=A)
>>> partition.assignment.tolist()
[0, 0, 1, 1]
>>> partition.block_nnz.tolist()
[4, 4]
>>> cut_weight(G, partition)
1.5

Partitions can also come from external tools, one block index per line.

>>> imported = import_partition(['1', '0', '1', '0'], n=4, s=2)
>>> imported.perm.tolist()
[2, 0, 3, 1]

"""

# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.


# Standard library imports.
import dataclasses
import heapq
import logging
import math
from pathlib import Path

# Numerical imports.
import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.csgraph
import scipy.sparse.linalg

# Local imports.
from block_jacobi_gmres.exceptions import ArgumentError
from block_jacobi_gmres.exceptions import DimensionError
from block_jacobi_gmres.exceptions import PartitionError


# Module logger.
logger = logging.getLogger(__name__)


DEFAULT_IMBALANCE_TOL = 0.10
""" Allowed relative excess of a block's node count over the mean. """

REFINE_PASSES = 8
""" Most boundary sweeps per bisection and over the final blocks. """

DENSE_SPECTRAL_LIMIT = 256
""" Largest subgraph whose Fiedler vector comes from a dense eigensolver. """


class WeightedGraph:
    """ Undirected graph with positive binary64 edge weights.

    The adjacency is held as a symmetric scipy CSR matrix without diagonal.

    Arguments
    ---------
    weights : scipy.sparse.csr_matrix
        Symmetric matrix of edge weights.
    """

    def __init__(self, weights):
        self._weights = weights

    @property
    def n(self):
        return self._weights.shape[0]

    @property
    def nedges(self):
        return self._weights.nnz // 2

    @property
    def degrees(self):
        """ Number of neighbours of each node. """
        return np.diff(self._weights.indptr)

    def neighbors(self, node):
        """ Neighbour indices and edge weights of `node`, in index order. """
        (start, stop) = self._weights.indptr[node:node + 2]
        return (self._weights.indices[start:stop],
                self._weights.data[start:stop])

    def weight(self, i, j):
        """ Weight of edge (i, j), or 0 when the edge is absent. """
        return float(self._weights[i, j])

    def edges(self):
        """ List of `(i, j, weight)` with `i < j`, in row order. """
        coo = self._weights.tocoo()
        upper = coo.row < coo.col
        return [(int(i), int(j), float(w)) for (i, j, w)
                in zip(coo.row[upper], coo.col[upper], coo.data[upper])]

    def adjacency(self):
        """ The weight matrix; shared, must not be modified. """
        return self._weights

    def __repr__(self):
        return f'WeightedGraph(n={self.n}, nedges={self.nedges})'


def graph_from_matrix(A):
    """ Build the weighted graph of a square matrix.

    Nodes i and j are joined when either `A[i, j]` or `A[j, i]` is nonzero;
    the edge weight is `(|A[i, j]| + |A[j, i]|) / 2`. The diagonal is
    ignored.

    >>> from block_jacobi_gmres.sparse import csr_from_triplets
    >>> A = csr_from_triplets([(0, 1, 5.0), (1, 2, -4.0), (2, 1, 2.0)], 3, 3)
    >>> G = graph_from_matrix(A)
    >>> (G.weight(0, 1), G.weight(1, 0), G.weight(1, 2))
    (2.5, 2.5, 3.0)
    """

    # Check the shape.
    if A.nrows != A.ncols:
        raise ArgumentError(f'matrix of shape {A.shape} is not square')

    # Symmetrize absolute values.
    absolute = abs(A.csr())
    total = (absolute + absolute.T).tocoo()

    # Drop the diagonal and structurally cancelled entries.
    keep = (total.row != total.col) & (total.data != 0.0)
    weights = scipy.sparse.csr_matrix(
      (total.data[keep] * 0.5, (total.row[keep], total.col[keep])),
      shape=A.shape)
    weights.sum_duplicates()
    weights.sort_indices()

    return WeightedGraph(weights)


@dataclasses.dataclass(frozen=True, eq=False)
class Partition:
    """ Assignment of the nodes of a graph to `s` disjoint, non-empty blocks.

    `perm[old] = new` gathers the nodes of each block contiguously, blocks in
    ascending order and nodes in their original order within a block.
    `block_nnz` counts the stored entries of each induced diagonal block. With
    only a graph at hand it counts the entries of the symmetrized pattern,
    one diagonal entry per node plus two per internal edge, and it is None
    when neither is known. `imbalance` is the largest block load over the
    mean load, measured in `block_nnz` when known and in node counts
    otherwise.
    """

    s: int
    assignment: np.ndarray
    perm: np.ndarray
    block_sizes: np.ndarray
    block_nnz: np.ndarray
    imbalance: float

    @classmethod
    def from_assignment(cls, assignment, s, matrix=None, graph=None):
        """ Validate an assignment array and derive the permutation.

        Arguments
        ---------
        assignment : array_like of int
            Block index of each node.
        s : int
            Number of blocks.
        matrix : SparseMatrix
            When given, block loads are measured in stored entries.
        graph : WeightedGraph
            Without a matrix, block loads are counted on this graph.
        """

        # Validate.
        assignment = np.array(assignment, dtype=np.int64)
        n = assignment.size
        if not 1 <= s <= n:
            raise PartitionError(f'block count {s} outside 1..{n}')
        if assignment.min() < 0 or assignment.max() >= s:
            raise PartitionError(f'block index outside 0..{s - 1}')
        sizes = np.bincount(assignment, minlength=s)
        if not sizes.all():
            raise PartitionError(
              f'block {int(np.flatnonzero(sizes == 0)[0])} is empty')

        # Stable gather of each block.
        order = np.argsort(assignment, kind='stable')
        perm = np.empty(n, dtype=np.int64)
        perm[order] = np.arange(n)

        # Loads.
        block_nnz = None
        load = sizes
        if matrix is not None:
            if matrix.shape != (n, n):
                raise DimensionError(f'matrix of shape {matrix.shape} does '
                                     f'not match {n} nodes')
            coo = matrix.csr().tocoo()
            inside = assignment[coo.row] == assignment[coo.col]
            block_nnz = np.bincount(assignment[coo.row[inside]], minlength=s)
        elif graph is not None:
            if graph.n != n:
                raise DimensionError(f'graph of {graph.n} nodes does not '
                                     f'match {n} nodes')
            coo = graph.adjacency().tocoo()
            inside = assignment[coo.row] == assignment[coo.col]
            block_nnz = sizes + np.bincount(assignment[coo.row[inside]],
                                            minlength=s)
        if block_nnz is not None:
            load = block_nnz
        mean = load.mean()
        imbalance = float(load.max() / mean) if mean > 0 else 1.0

        # Freeze the arrays.
        for array in (assignment, perm, sizes, block_nnz):
            if array is not None:
                array.flags.writeable = False

        return cls(s=s, assignment=assignment, perm=perm, block_sizes=sizes,
                   block_nnz=block_nnz, imbalance=imbalance)

    @property
    def n(self):
        return self.assignment.size

    @property
    def offsets(self):
        """ Start of each block in the permuted ordering, plus `n`. """
        return np.concatenate(([0], np.cumsum(self.block_sizes)))

    def blocks(self):
        """ Original node indices of each block. """
        return [np.flatnonzero(self.assignment == block)
                for block in range(self.s)]

    def measure(self, A):
        """ The same partition with loads measured against matrix `A`. """
        return Partition.from_assignment(self.assignment, self.s, matrix=A)

    def __repr__(self):
        return (f'Partition(n={self.n}, s={self.s}, '
                f'imbalance={self.imbalance:.3f})')


def partition_graph(G, s, imbalance_tol=DEFAULT_IMBALANCE_TOL, matrix=None):
    """ Split a graph into `s` blocks of balanced size with a small cut.

    The nodes that have edges are bisected recursively, each split sized in
    proportion to the number of blocks on either side. A split keeps the
    cheapest of several candidates: regions grown greedily from a
    pseudo-peripheral node, with ties going either to the lower index or to
    the node nearer the seed, and both halves of the Fiedler-vector
    ordering. Every candidate is first improved by boundary sweeps that only
    accept strict cut reductions within the size limits. Isolated nodes are
    then dealt to the smallest blocks, a last sweep runs across all blocks,
    and blocks are numbered in order of their smallest node. Ties always go
    to the smallest index, so the result is deterministic.

    Arguments
    ---------
    G : WeightedGraph
        Graph to split.
    s : int
        Number of blocks, `1 <= s <= G.n`.
    imbalance_tol : float
        Allowed relative excess of a block's node count.
    matrix : SparseMatrix
        When given, block loads are counted in its stored entries. Otherwise
        they are counted on the graph itself.

    Returns
    -------
    Partition
        The partition.
    """

    # Validate.
    if not 1 <= s <= G.n:
        raise ArgumentError(f'block count {s} outside 1..{G.n}')
    if imbalance_tol < 0:
        raise ArgumentError('imbalance tolerance must be non-negative')

    # Build the assignment.
    assignment = np.full(G.n, -1, dtype=np.int64)
    if s == 1:
        assignment[:] = 0
    else:
        max_size = max(math.ceil(G.n / s),
                       math.floor((1.0 + imbalance_tol) * G.n / s))
        connected = np.flatnonzero(G.degrees > 0)
        _split(G.adjacency(), connected, 0, s, max_size, assignment)
        _deal_isolated(G, s, assignment)
        moves = _refine_boundary(G, s, assignment, max_size)
        logger.debug('final boundary sweeps moved %d nodes', moves)
        assignment = _number_by_first_node(assignment, s)

    partition = Partition.from_assignment(assignment, s, matrix=matrix,
                                          graph=G)
    logger.info('partitioned %d nodes into %d blocks: cut %.6g, imbalance '
                '%.3f', G.n, s, cut_weight(G, partition), partition.imbalance)
    return partition


def _split(W, nodes, first, count, max_size, assignment):
    """ Assign `nodes` to blocks `first .. first + count - 1`. """

    if nodes.size == 0:
        return
    if count == 1:
        assignment[nodes] = first
        return

    # Size the leading side in proportion to its blocks.
    k = nodes.size
    left = count // 2
    right = count - left
    lowest = min(left, k)
    highest = k - min(right, k - lowest)
    target = min(max(-(-k * left // count), lowest), highest)
    bounds = (max(lowest, k - right * max_size), min(left * max_size, highest))

    # Bisect the induced subgraph.
    leading = _bisect(W[nodes][:, nodes].tocsr(), target, bounds)
    _split(W, nodes[leading], first, left, max_size, assignment)
    _split(W, nodes[~leading], first + left, right, max_size, assignment)


def _bisect(W, target, bounds):
    """ Boolean mask of a leading region of about `target` nodes. """

    k = W.shape[0]
    if target in (0, k):
        return np.full(k, target == k)

    # Candidate regions.
    seed = _peripheral_node(W)
    distance = scipy.sparse.csgraph.shortest_path(W, directed=False,
                                                  unweighted=True,
                                                  indices=seed)
    candidates = [_grow_region(W, seed, target, np.zeros(k)),
                  _grow_region(W, seed, target, distance)]
    order = _fiedler_order(W)
    if order is not None:
        for ordering in (order, order[::-1]):
            region = np.zeros(k, dtype=bool)
            region[ordering[:target]] = True
            candidates.append(region)

    # Keep the cheapest after refinement.
    best = None
    best_cut = math.inf
    for region in candidates:
        _refine_split(W, region, bounds)
        cut = _split_cut(W, region)
        if cut < best_cut:
            (best, best_cut) = (region, cut)
    return best


def _peripheral_node(W):
    """ A node of smallest degree among those farthest from a node of
        smallest degree.
    """
    degrees = np.diff(W.indptr)
    pool = np.flatnonzero(degrees > 0)
    if pool.size == 0:
        return 0
    start = int(pool[np.argmin(degrees[pool])])
    distance = scipy.sparse.csgraph.shortest_path(W, directed=False,
                                                  unweighted=True,
                                                  indices=start)
    reachable = np.isfinite(distance)
    far = np.flatnonzero(distance == distance[reachable].max())
    return int(far[np.argmin(degrees[far])])


def _growth_gain(W, node, region):
    """ Weight joining `node` to the region minus weight to the rest. """
    (start, stop) = W.indptr[node:node + 2]
    inside = region[W.indices[start:stop]]
    weights = W.data[start:stop]
    return float(weights[inside].sum() - weights[~inside].sum())


def _grow_region(W, seed, target, tiebreak):
    """ Grow a region of `target` nodes from `seed`, always absorbing the
        frontier node of largest gain; `tiebreak` orders equal gains before
        the node index does.
    """

    region = np.zeros(W.shape[0], dtype=bool)
    frontier = []
    node = seed
    for size in range(1, target + 1):

        # Absorb the node and refresh the gains of its free neighbours.
        region[node] = True
        if size == target:
            break
        (start, stop) = W.indptr[node:node + 2]
        for neighbor in W.indices[start:stop]:
            if not region[neighbor]:
                gain = _growth_gain(W, neighbor, region)
                heapq.heappush(frontier,
                               (-gain, tiebreak[neighbor], int(neighbor)))

        # Next node: best current frontier entry, or a fresh start.
        node = None
        while frontier:
            (negative_gain, _, candidate) = heapq.heappop(frontier)
            if region[candidate]:
                continue
            if _growth_gain(W, candidate, region) == -negative_gain:
                node = candidate
                break
        if node is None:
            node = int(np.flatnonzero(~region)[0])

    return region


def _fiedler_order(W):
    """ Nodes sorted by their entry in the Fiedler vector of `W`, or None
        when the eigenvector cannot be computed.
    """

    k = W.shape[0]
    if k < 3:
        return None
    laplacian = scipy.sparse.csgraph.laplacian(W)
    try:
        if k <= DENSE_SPECTRAL_LIMIT:
            (values, vectors) = scipy.linalg.eigh(laplacian.toarray(),
                                                  subset_by_index=[0, 1])
        else:
            shift = 1e-6 * float(laplacian.diagonal().max())
            (values, vectors) = scipy.sparse.linalg.eigsh(
              scipy.sparse.csc_matrix(laplacian), k=2, sigma=-shift,
              which='LM', v0=np.linspace(1.0, 2.0, k))
    except (np.linalg.LinAlgError, scipy.sparse.linalg.ArpackError) as error:
        logger.debug('no Fiedler vector for %d nodes: %s', k, error)
        return None

    # Fix the sign so the order does not depend on the solver.
    vector = vectors[:, np.argsort(values)[1]]
    if vector[np.argmax(np.abs(vector))] < 0:
        vector = -vector
    return np.argsort(vector, kind='stable')


def _split_cut(W, region):
    rows = np.repeat(np.arange(W.shape[0]), np.diff(W.indptr))
    return float(W.data[region[rows] != region[W.indices]].sum()) / 2.0


def _refine_split(W, region, bounds):
    """ Move single nodes across a two-way split while that strictly reduces
        the cut and the region size stays within `bounds`. Returns the move
        count.
    """

    size = int(region.sum())
    moves = 0
    for _ in range(REFINE_PASSES):

        # Nodes that would reduce the cut, best first.
        sign = np.where(region, 1.0, -1.0)
        gains = -sign * (W @ sign)
        order = np.flatnonzero(gains > 0.0)
        order = order[np.argsort(-gains[order], kind='stable')]

        # Move them while the gain holds.
        moved = 0
        for node in order:
            (start, stop) = W.indptr[node:node + 2]
            same = region[W.indices[start:stop]] == region[node]
            weights = W.data[start:stop]
            change = -1 if region[node] else 1
            if (weights[~same].sum() - weights[same].sum() <= 0.0
                    or not bounds[0] <= size + change <= bounds[1]):
                continue
            region[node] = not region[node]
            size += change
            moved += 1

        moves += moved
        if moved == 0:
            break

    return moves


def _deal_isolated(G, s, assignment):
    """ Give each unassigned node to the currently smallest block. """
    sizes = np.bincount(assignment[assignment >= 0], minlength=s)
    for node in np.flatnonzero(assignment == -1):
        block = int(np.argmin(sizes))
        assignment[node] = block
        sizes[block] += 1


def _refine_boundary(G, s, assignment, max_size):
    """ Sweeps moving nodes to the neighbouring block they are most strongly
        tied to, when that reduces the cut. Returns the move count.
    """

    sizes = np.bincount(assignment, minlength=s)
    moves = 0

    for _ in range(REFINE_PASSES):
        moved = 0
        for node in range(G.n):
            source = assignment[node]
            (neighbors, weights) = G.neighbors(node)
            if sizes[source] <= 1 or neighbors.size == 0:
                continue

            # Weight towards each block.
            links = np.bincount(assignment[neighbors], weights=weights,
                                minlength=s)
            internal = links[source]
            links[source] = -np.inf
            links[sizes >= max_size] = -np.inf
            destination = int(np.argmax(links))

            # Move when the cut strictly shrinks.
            if links[destination] - internal > 0.0:
                assignment[node] = destination
                sizes[source] -= 1
                sizes[destination] += 1
                moved += 1

        moves += moved
        if moved == 0:
            break

    return moves


def _number_by_first_node(assignment, s):
    """ Renumber blocks so block ids increase with their smallest node. """
    (blocks, first) = np.unique(assignment, return_index=True)
    renumber = np.arange(s)
    renumber[blocks[np.argsort(first, kind='stable')]] = blocks
    return renumber[assignment]


def cut_weight(G, partition):
    """ Total weight of the edges joining different blocks. """
    assignment = getattr(partition, 'assignment', partition)
    coo = G.adjacency().tocoo()
    cut = assignment[coo.row] != assignment[coo.col]
    return float(coo.data[cut].sum()) / 2.0


def import_partition(stream, n, s=None, matrix=None):
    """ Read a partition file: one zero-based block index per line.

    Arguments
    ---------
    stream : iterable of bytes or str
        Open file (binary or text) or iterable of lines.
    n : int
        Expected number of nodes (lines).
    s : int
        Number of blocks; by default one more than the largest index read.
    matrix : SparseMatrix
        When given, block loads are measured against it.

    >>> import_partition(['0', '2', '1'], n=3).s
    3
    >>> import_partition(['0', '1'], n=3, s=2)
    Traceback (most recent call last):
    ...
    block_jacobi_gmres.exceptions.PartitionError: line 2: expected 3 block indices, found 2
    """

    # Parse one index per non-blank line.
    assignment = []
    number = 0
    for (number, line) in enumerate(stream, start=1):
        if isinstance(line, bytes):
            line = line.decode('utf-8', errors='replace')
        line = line.strip()
        if not line:
            continue
        try:
            block = int(line)
        except ValueError:
            raise PartitionError(f'cannot parse block index {line!r}',
                                 line=number) from None
        if block < 0:
            raise PartitionError(f'negative block index {block}', line=number)
        if s is not None and block >= s:
            raise PartitionError(f'block index {block} outside 0..{s - 1}',
                                 line=number)
        if len(assignment) == n:
            raise PartitionError(f'more than {n} block indices', line=number)
        assignment.append(block)

    # Check the count.
    if len(assignment) != n:
        raise PartitionError(
          f'expected {n} block indices, found {len(assignment)}', line=number)
    if s is None:
        s = max(assignment, default=-1) + 1

    return Partition.from_assignment(assignment, s, matrix=matrix)


def load_partition(path, n, s=None, matrix=None):
    """ Read a partition file from a filesystem path. """
    with open(path, 'rb') as stream:
        return import_partition(stream, n, s, matrix=matrix)


def export_partition(partition, target):
    """ Write a partition file to a path or text stream. """
    if isinstance(target, (str, Path)):
        with open(target, 'w') as stream:
            return export_partition(partition, stream)
    target.writelines(f'{block}\n' for block in partition.assignment)


# Main.
if __name__ == '__main__':
    import doctest
    doctest.testmod()
