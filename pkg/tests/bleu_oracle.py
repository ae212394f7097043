"""Brute-force BLEU oracle, written independently of the package code.

Sticks to explicit loops, plain dict counting, and a product-form geometric
mean so it shares no structure with the implementation it checks.
"""

import math


def oracle_bleu(candidate, references, max_n=4):
    if len(candidate) == 0:
        return 0.0
    order = max_n if max_n < len(candidate) else len(candidate)

    product = 1.0
    for n in range(1, order + 1):
        cand_grams = {}
        for i in range(len(candidate) - n + 1):
            gram = tuple(candidate[i : i + n])
            cand_grams[gram] = cand_grams.get(gram, 0) + 1
        clipped = 0
        total = 0
        for gram, count in cand_grams.items():
            best_ref_count = 0
            for ref in references:
                ref_count = 0
                for j in range(len(ref) - n + 1):
                    if tuple(ref[j : j + n]) == gram:
                        ref_count += 1
                if ref_count > best_ref_count:
                    best_ref_count = ref_count
            clipped += count if count < best_ref_count else best_ref_count
            total += count
        if clipped == 0:
            return 0.0
        product *= (clipped / total) ** (1.0 / order)

    c_len = len(candidate)
    best_r = None
    for ref in references:
        r = len(ref)
        if best_r is None:
            best_r = r
        elif abs(r - c_len) < abs(best_r - c_len):
            best_r = r
        elif abs(r - c_len) == abs(best_r - c_len) and r < best_r:
            best_r = r
    penalty = 1.0 if c_len > best_r else math.exp(1.0 - best_r / c_len)
    return penalty * product
