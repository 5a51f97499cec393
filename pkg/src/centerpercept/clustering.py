"""Agglomerative clustering with Ward linkage and a distance cut-off.

Linkage between clusters A and B is ``sqrt(2 |A||B| / (|A| + |B|)) * ||c_A - c_B||``,
which equals the Euclidean distance for two singletons. Merging stops once the
smallest linkage exceeds the threshold.
"""

from __future__ import annotations

import numpy as np


def ward_clusters(points, threshold: float) -> np.ndarray:
    """Cluster label per point; labels are ordered by cluster size, largest first."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return np.zeros(0, dtype=np.int64)

    # identical points always merge at zero cost, so start from unique points
    uniq, inverse, counts = np.unique(pts, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    # unique() sorts rows; re-order groups by first occurrence for stable tie-breaking
    first = np.full(len(uniq), n, dtype=np.int64)
    np.minimum.at(first, inverse, np.arange(n))
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    centroids = uniq[order].copy()
    sizes = counts[order].astype(np.float64)
    group_of_point = rank[inverse]

    m = len(centroids)
    members = [[i] for i in range(m)]
    active = np.ones(m, dtype=bool)
    diff = centroids[:, None, :] - centroids[None, :, :]
    link = np.sqrt(
        2.0 * sizes[:, None] * sizes[None, :] / (sizes[:, None] + sizes[None, :])
    ) * np.sqrt((diff ** 2).sum(-1))
    np.fill_diagonal(link, np.inf)

    while active.sum() > 1:
        flat = int(np.argmin(link))
        i, j = divmod(flat, m)
        if link[i, j] > threshold:
            break
        if j < i:
            i, j = j, i
        total = sizes[i] + sizes[j]
        centroids[i] = (sizes[i] * centroids[i] + sizes[j] * centroids[j]) / total
        sizes[i] = total
        members[i].extend(members[j])
        members[j] = []
        active[j] = False
        link[j, :] = np.inf
        link[:, j] = np.inf
        others = np.flatnonzero(active)
        others = others[others != i]
        if len(others):
            d = np.sqrt(((centroids[others] - centroids[i]) ** 2).sum(-1))
            row = np.sqrt(2.0 * sizes[i] * sizes[others] / (sizes[i] + sizes[others])) * d
            link[i, others] = row
            link[others, i] = row

    clusters = []
    for g in np.flatnonzero(active):
        pts_in = np.flatnonzero(np.isin(group_of_point, members[g]))
        clusters.append(pts_in)
    clusters.sort(key=lambda idx: (-len(idx), idx[0]))
    labels = np.empty(n, dtype=np.int64)
    for lab, idx in enumerate(clusters):
        labels[idx] = lab
    return labels
