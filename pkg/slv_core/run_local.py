from pathlib import Path

from slv_core.classify import dynamics_verdict
from slv_core.fixtures import FIXTURES, sampled_class_26_spec
from slv_core.fixedpoints import census_frame, fixed_point_census
from slv_core.model import derive_constants
from slv_cli.services import atomic_write_text, to_json

MODELS_DIR = Path("models")
OUTPUTS_DIR = Path("outputs")


def main():
    for name, spec in FIXTURES.items():
        path = atomic_write_text(MODELS_DIR / f"{name}.json", to_json(spec.to_json_dict()) + "\n")
        print("Saved fixture model to", path)

        consts = derive_constants(spec)
        verdict = dynamics_verdict(spec, with_census=False)
        print(f"  r={consts.r:.6g} rho*={consts.rho_star:.6g} rho_hat={consts.rho_hat:.6g}")
        print(f"  class {verdict.class_label.value} subcase {verdict.subcase}: {verdict.description}")

    sampled = sampled_class_26_spec(seed=0)
    path = atomic_write_text(MODELS_DIR / "class26-sampled.json", to_json(sampled.to_json_dict()) + "\n")
    print("Saved sampled class-26 model to", path)

    # Fixed-point census of the first May-Leonard fixture
    spec = FIXTURES["mayleonard-1.2-0.5"]
    census = census_frame(fixed_point_census(spec))
    atomic_write_text(OUTPUTS_DIR / "census_mayleonard-1.2-0.5.csv", census.to_csv(index=False))
    print(census[["label", "kind", "x1", "x2", "x3", "stability"]])
    print("Saved census to outputs/census_mayleonard-1.2-0.5.csv")


if __name__ == "__main__":
    main()
