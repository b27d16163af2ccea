"""Error of a conformal stage against the stage ratio K."""
import csv

import click

from isoext.demos import stage_scaling


@click.command()
@click.option("--resolution", default=257, show_default=True)
@click.option("--K", "Ks", type=float, multiple=True, default=(8.0, 16.0, 32.0), show_default=True)
@click.option("--rho", default=0.2, show_default=True)
@click.option("--out", default="stage_scaling.csv", show_default=True)
def main(resolution, Ks, rho, out):
    result = stage_scaling(resolution=resolution, Ks=Ks, c=rho)
    keys = ["K", "E_inner", "E_max"]
    with open(out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(result.rows)
    for row in result.rows:
        click.echo(f"K={row['K']:>6g}  E_inner={row['E_inner']:.4e}  E_max={row['E_max']:.4e}")
    click.echo(f"slope {result.slope:.3f} (target -1)")


if __name__ == "__main__":
    main()
