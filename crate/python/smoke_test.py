"""Exercise the Python bindings end to end.

Build first:  pip install --no-build-isolation ./crates/py
Then run:     python python/smoke_test.py
"""

import os
import tempfile

import sfs


def check(cond, msg):
    if not cond:
        raise AssertionError(msg)


def main():
    check(set(sfs.Scene.names()) >= {"bump", "two_bump", "face_like"}, "scene names")

    # Rendering cannot tell a surface from its mirror image.
    grid = sfs.Grid.square(48, 1.0)
    hill = sfs.HeightField.make("bump", grid)
    a, b = hill.render().to_list(), hill.negate().render().to_list()
    check(a == b, "render depends on sign")

    scene = sfs.Scene("two_bump")
    truth = scene.truth()
    image = scene.image()
    analysis = sfs.Analysis(image)
    check(len(analysis.points) == 6 and len(analysis.edges) == 7, "two_bump graph")
    check((analysis.free_parts, analysis.free_edges) == (2, 1), "two_bump decomposition")
    check(analysis.n_classes == 3, "two_bump classes")
    check(len(analysis.candidates()) == 8, "candidate count")
    check(analysis.candidates()[0] == analysis.chosen, "candidate 0 is the chosen configuration")

    for signs in analysis.candidates():
        res = analysis.reconstruct(signs).metrics()["render_residual"]
        check(res <= 0.05, f"candidate residual {res}")

    resolution = analysis.resolve(scene.anchors(truth))
    check(len(resolution.choices) == 3, "every class decided")
    rec = resolution.reconstruct()
    m = rec.metrics(truth)
    check(m["relative_rmse"] <= 0.01, f"anchored depth error {m['relative_rmse']}")
    check(len(rec.sources) >= 1, "no sources")

    try:
        analysis.resolve([sfs.Anchor(0, 12, -1.0)])
    except sfs.UnresolvedAmbiguityError:
        pass
    else:
        raise AssertionError("one anchor should leave classes undecided")

    flat = sfs.Image(sfs.Grid.square(16, 1.0), [[0.8] * 16 for _ in range(16)])
    try:
        sfs.Analysis(flat)
    except sfs.DegenerateImageError:
        pass
    else:
        raise AssertionError("flat image accepted")

    try:
        sfs.Scene("teapot")
    except ValueError as e:
        check("face_like" in str(e), "unknown scene message lists names")

    with tempfile.TemporaryDirectory() as d:
        image.write_pgm(os.path.join(d, "image.pgm"))
        again = sfs.Image.read_pgm(os.path.join(d, "image.pgm"))
        check(again.to_list() == image.quantize().to_list(), "pgm round trip")
        rec.surface.write_csv(os.path.join(d, "surface.csv"))
        back = sfs.HeightField.read_csv(os.path.join(d, "surface.csv"))
        check(back.grid.width == truth.grid.width, "csv round trip")
        check(rec.surface.to_obj().startswith("v "), "obj text")

    print(f"smoke test ok: relative rmse {m['relative_rmse']:.4f}")


if __name__ == "__main__":
    main()
