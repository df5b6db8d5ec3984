"""Errors shared by both stepping backends."""


class PopulationCapError(RuntimeError):
    """A site or cumulative population exceeded the configured cap.

    Raised instead of saturating: supercritical regimes can blow up in
    finite time and a silently wrong count is worse than an abort.
    """

    def __init__(self, replicate: int, generation: int, site: int, detail: str = "site population"):
        self.replicate = replicate
        self.generation = generation
        self.site = site
        super().__init__(
            f"{detail} exceeded cap at replicate={replicate}, generation={generation}, site={site}"
        )
