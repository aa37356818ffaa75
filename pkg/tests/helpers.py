import numpy as np

from digitasr.acoustic import AcousticModel, DiscreteHmm


def random_hmm(rng, S, K, segment=False, bakis=False, zero_frac=0.0):
    """Random stochastic HMM; ``segment`` gives the last state exit mass."""
    pi = np.zeros(S)
    if bakis:
        pi[0] = 1.0
    else:
        pi = rng.dirichlet(np.ones(S))
    A = np.zeros((S, S))
    exit_p = 0.0
    for i in range(S):
        allowed = [i, i + 1] if bakis else list(range(S + 1))
        allowed = [j for j in allowed if j < S or (segment and i == S - 1)]
        if bakis and i == S - 1 and not segment:
            allowed = [i]
        mask = rng.random(len(allowed)) >= zero_frac
        mask[0] = True
        w = rng.dirichlet(np.ones(len(allowed))) * mask
        w /= w.sum()
        for j, p in zip(allowed, w):
            if j == S:
                exit_p = p
            else:
                A[i, j] = p
    if segment and exit_p == 0.0:
        A[S - 1] *= 0.5
        exit_p = 0.5
    B = rng.dirichlet(np.ones(K), size=S)
    if zero_frac:
        B = B * (rng.random((S, K)) >= zero_frac)
        B[np.arange(S), rng.integers(0, K, S)] += 0.1
        B /= B.sum(axis=1, keepdims=True)
    return DiscreteHmm(pi, A, B, exit_p)


def random_model(rng, phones, S, K, zero_frac=0.0):
    hmms = {p: random_hmm(rng, S, K, segment=True, bakis=True, zero_frac=zero_frac)
            for p in phones}
    return AcousticModel(hmms, None, states_per_phone=S)


def random_graph_instance(rng, max_nodes=40):
    """Small random (graph, obs, model, lexicon) for exhaustive checks.

    Returns ``None`` if the draw exceeds ``max_nodes``; callers redraw.
    """
    from digitasr.linguist import SIL, Grammar, Lexicon, compile_graph

    K = int(rng.integers(1, 5))
    S = int(rng.integers(1, 5))
    phones = ["P", "Q", "R"][: int(rng.integers(1, 4))]
    silence = bool(rng.integers(0, 2))
    model = random_model(rng, phones + ([SIL] if silence else []), S, K,
                         zero_frac=float(rng.choice([0.0, 0.3])))
    words = {}
    for w in ("W1", "W2", "W3")[: int(rng.integers(1, 4))]:
        words[w] = tuple(rng.choice(phones, int(rng.integers(1, 3))))
    lex = Lexicon(words)
    kind = ["isolated_word", "word_loop", "bounded"][int(rng.integers(0, 3))]
    if kind == "bounded":
        grammar = Grammar("word_loop", lex.words, 1, int(rng.integers(1, 3)))
    else:
        grammar = Grammar(kind, lex.words)
    graph = compile_graph(grammar, lex, model)
    if graph.num_nodes > max_nodes:
        return None
    obs = rng.integers(0, K, int(rng.integers(1, 9)))
    return graph, obs, model, lex
