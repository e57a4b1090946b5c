"""Exception hierarchy shared by all tunnelipm modules."""


class TunnelIPMError(Exception):
    """Base class for every error raised by this package."""


class DegenerateCorrespondences(TunnelIPMError):
    """Four-point correspondences cannot define a homography."""

    def __init__(self, message, corners=()):
        super().__init__(message)
        self.corners = tuple(corners)


class PointAtInfinity(TunnelIPMError):
    """A point lies on the vanishing line of a homography."""


class SingularMatrix(TunnelIPMError):
    """A homography cannot be inverted or normalized."""


class RoiOutOfBounds(TunnelIPMError):
    """ROI corners fall outside the source image."""


class InvalidRoi(TunnelIPMError):
    """ROI geometry or calibration values violate their invariants."""


class ManifestError(TunnelIPMError):
    """A dataset manifest does not follow the expected schema."""


class EmptyDataset(TunnelIPMError):
    """An operation needs at least one image."""


class MissingConfidence(TunnelIPMError):
    """A detection was supplied without a confidence score."""


class BehindCamera(TunnelIPMError):
    """A world point is not in front of the camera."""
