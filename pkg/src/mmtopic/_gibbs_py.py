"""Pure-Python collapsed-Gibbs kernels.

Same signatures and arithmetic order as the compiled ``_gibbs_ext`` so that
both backends produce identical assignments from identical uniforms.
"""


def _draw(cum, K, u):
    target = u * cum[K - 1]
    for k in range(K):
        if target < cum[k]:
            return k
    k = K - 1
    while k > 0 and cum[k] == cum[k - 1]:
        k -= 1
    return k


def sweep(z, tok_doc, tok_mod, tok_word, n_doc, n_feat, n_cat,
          alpha, beta, wbeta, bias, use_bias, uniforms, cum):
    K = n_doc.shape[1]
    zl = z.tolist()
    nd = n_doc.tolist()
    nf = n_feat.tolist()
    nc = n_cat.tolist()
    docs = tok_doc.tolist()
    mods = tok_mod.tolist()
    words = tok_word.tolist()
    betas = beta.tolist()
    wbetas = wbeta.tolist()
    us = uniforms.tolist()
    bl = bias.tolist() if use_bias else None
    c = [0.0] * K
    changed = 0
    for t in range(len(zl)):
        j = docs[t]
        m = mods[t]
        w = words[t]
        old = zl[t]
        rd = nd[j]
        rf = nf[w]
        rc = nc[m]
        rd[old] -= 1
        rf[old] -= 1
        rc[old] -= 1
        b = betas[m]
        wb = wbetas[m]
        total = 0.0
        if use_bias:
            rb = bl[j]
            for k in range(K):
                p = (rd[k] + alpha) * (rf[k] + b) / (rc[k] + wb)
                p = p * rb[k]
                total = total + p
                c[k] = total
        else:
            for k in range(K):
                p = (rd[k] + alpha) * (rf[k] + b) / (rc[k] + wb)
                total = total + p
                c[k] = total
        new = _draw(c, K, us[t])
        zl[t] = new
        rd[new] += 1
        rf[new] += 1
        rc[new] += 1
        if new != old:
            changed += 1
    z[:] = zl
    n_doc[...] = nd
    n_feat[...] = nf
    n_cat[...] = nc
    cum[:] = c
    return changed


def infer(z, tok_word, phi_t, alpha, n_k, uniforms, burn_in, acc, cum):
    n = z.shape[0]
    K = n_k.shape[0]
    zl = z.tolist()
    words = tok_word.tolist()
    ph = phi_t.tolist()
    nk = n_k.tolist()
    al = acc.tolist()
    c = [0.0] * K
    denom = n + K * alpha
    kept = 0
    for s, us in enumerate(uniforms.tolist()):
        for t in range(n):
            row = ph[words[t]]
            old = zl[t]
            nk[old] -= 1
            total = 0.0
            for k in range(K):
                p = (nk[k] + alpha) * row[k]
                total = total + p
                c[k] = total
            new = _draw(c, K, us[t])
            zl[t] = new
            nk[new] += 1
        if s >= burn_in:
            for k in range(K):
                al[k] = al[k] + (nk[k] + alpha) / denom
            kept += 1
    z[:] = zl
    n_k[:] = nk
    acc[:] = al
    return kept
