"""
Demo script for the entrance-diffusions toolkit
Regenerates the plot-ready data of the four reference figures
"""

import logging
from pathlib import Path

import numpy as np
import pandas as pd

import artifacts
import densities
import girsanov
import processes
import simulate
from config import config
from processes import ProcessSpec

logging.basicConfig(level=getattr(logging, config.LOG_LEVEL), format=config.LOG_FORMAT)
logger = logging.getLogger(__name__)


class FigureDemo:
    def __init__(self, out_dir: str = "figures", n_paths: int = 100, seed: int = config.DEFAULT_SEED):
        self.out_dir = Path(out_dir)
        self.n_paths = n_paths
        self.seed = seed

    def tilde_and_image(self) -> pd.DataFrame:
        """Tilde density of the coth process and its positive image (a=1, mu=-1, t=1)."""
        spec = ProcessSpec.coth(1.0, -1.0)
        t = 1.0
        xs = np.arange(-5.0, 3.0 + 1e-9, 0.01)
        tilde = girsanov.TildeDensity(spec)
        frame = pd.DataFrame({
            "x": xs,
            "tilde_pdf": tilde.eval(xs, t),
            "image_pdf": girsanov.image_density(tilde, tilde.boundary, xs, t),
            "pdf": densities.pdf(spec, xs, t),
        })
        artifacts.write_csv(frame, self.out_dir / "fig1_tilde_image.csv",
                            spec=processes.spec_to_dict(spec), t=t)
        return frame

    def line_sample(self, spec: ProcessSpec, dt: float, t_end: float, name: str) -> pd.DataFrame:
        """A bundle of sample paths with the ensemble average and the closed-form mean."""
        stats = simulate.simulate_ensemble(spec, dt, t_end, self.n_paths, self.seed)
        frame = stats.to_frame()
        frame["closed_mean"] = [spec.x0 if t == 0 else densities.mean(spec, float(t)) for t in stats.t_grid]
        frame["boundary"] = processes.boundary(spec).position_at(stats.t_grid)
        stride = max(1, int(round(0.01 / dt)))
        for index in range(min(10, self.n_paths)):
            path = simulate.ensemble_path(spec, dt, t_end, self.seed, index)
            frame[f"path_{index}"] = path.positions
        frame = frame.iloc[::stride].reset_index(drop=True)
        artifacts.write_csv(frame, self.out_dir / name, spec=processes.spec_to_dict(spec),
                            seed=self.seed, dt=dt, n=self.n_paths)
        return frame

    def run(self):
        logger.info(f"Writing figure data to {self.out_dir}")
        self.tilde_and_image()
        self.line_sample(ProcessSpec.line(0.5, 1.0), 1e-3, 10.0, "fig2_line_rising.csv")
        self.line_sample(ProcessSpec.line(-0.5, 1.0), 1e-4, 3.0, "fig3_line_falling.csv")
        self.line_sample(ProcessSpec.line_star(-0.5, 1.0), 1e-4, 3.0, "fig4_line_star.csv")
        logger.info("Figure data complete")


def main():
    """Run the figure demo"""
    try:
        FigureDemo().run()
    except KeyboardInterrupt:
        logger.info("Demo interrupted by user")
    except Exception as e:
        logger.error(f"Demo error: {str(e)}")


if __name__ == "__main__":
    main()
