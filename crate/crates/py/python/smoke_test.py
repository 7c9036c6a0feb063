"""Quick end-to-end check of the fed3r extension module."""

import math

import fed3r


def close(a, b, tol=1e-9):
    return all(abs(x - y) <= tol * max(1.0, abs(y)) for x, y in zip(a, b))


def main():
    ds = fed3r.gen_gaussian_mixture(classes=5, dim=8, per_class=40, separation=3.0, seed=1)
    assert len(ds) == 200 and ds.dim == 8 and ds.classes == 5
    train, test = ds.split(0.25, seed=2)

    manifest = fed3r.partition(train, clients=10, alpha=0.5, seed=3)
    assert manifest.num_clients == 10
    assert sum(manifest.client_sizes()) == len(train)

    # merged client statistics match the centralised solve
    feats, labels = train.features(), train.labels()
    total = fed3r.RRStatistics(train.dim, train.classes)
    for k in range(manifest.num_clients):
        idx = manifest.client(k)
        total.merge(fed3r.RRStatistics.compute([feats[i] for i in idx], [labels[i] for i in idx], train.classes))
    assert total.count == len(train)
    central = fed3r.centralized_rr(feats, labels, train.classes)
    for a, b in zip(total.solve().weights(), central.weights()):
        assert close(a, b, 1e-8)
    restored = fed3r.RRStatistics.from_bytes(total.to_bytes())
    assert restored.count == total.count

    clf, trace = fed3r.run_fed3r(train, manifest, clients_per_round=3, seed=4, eval_ds=test)
    assert len(trace["records"]) == math.ceil(10 / 3)
    assert trace["metrics_csv"].startswith("round,new_clients,")
    assert trace["final_accuracy"] > 0.8, trace["final_accuracy"]
    assert abs(clf.accuracy(test) - trace["final_accuracy"]) < 1e-12

    _, rf_trace = fed3r.run_fed3r(train, manifest, 5, rff_dim=128, rff_sigma=4.0, rff_seed=5, eval_ds=test)
    assert rf_trace["algorithm"] == "fed3r_rf"

    lp_clf, lp_trace = fed3r.run_lp(train, manifest, 3, rounds=5, lr=0.05, init=clf, temperature=0.1, eval_ds=test)
    assert len(lp_trace["records"]) == 5
    assert lp_clf.predict(feats[0]) in range(5)

    ncm = fed3r.fedncm_fit(train, manifest)
    assert 0.0 <= ncm.accuracy(test) <= 1.0

    rff = fed3r.RffMap(8, 2048, 4.0, 11)
    z, w = feats[0], feats[1]
    phi_z, phi_w = rff.map_vector(z), rff.map_vector(w)
    approx = sum(a * b for a, b in zip(phi_z, phi_w))
    assert abs(approx - fed3r.kernel_exact(z, w, 4.0)) < 0.1

    cov = fed3r.coupon_rounds(20, 4, trials=200, seed=6, fractions=[0.5, 1.0])
    assert cov["mean_rounds"][0] <= cov["mean_rounds"][1]

    down, up = fed3r.comm_per_client("fed3r", 16, 4)
    assert (down, up) == (0, 16 * 16 + 16 * 4)

    print("fed3r smoke test passed: accuracy %.3f" % trace["final_accuracy"])


if __name__ == "__main__":
    main()
