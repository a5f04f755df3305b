from django.db import models


class NoisePattern(models.TextChoices):
    NONIID_GAUSSIAN = 'noniid_gaussian', 'Non-i.i.d. Gaussian'
    GAUSSIAN_STRIPE = 'gaussian_stripe', 'Gaussian + stripe'
    GAUSSIAN_DEADLINE = 'gaussian_deadline', 'Gaussian + deadline'
    GAUSSIAN_IMPULSE = 'gaussian_impulse', 'Gaussian + impulse'
    MIXTURE = 'mixture', 'Mixture'


class BandArtifact(models.TextChoices):
    NONE = 'none', 'None'
    STRIPE = 'stripe', 'Stripe'
    DEADLINE = 'deadline', 'Deadline'
    IMPULSE = 'impulse', 'Impulse'


class RunStatus(models.TextChoices):
    RUNNING = 'running', 'Running'
    COMPLETED = 'completed', 'Completed'
    ABORTED = 'aborted', 'Aborted'


class FppPlacement(models.TextChoices):
    PER_RTL = 'per_rtl', 'Deepest blocks of every RTL'
    FINAL_RTL = 'final_rtl', 'Deepest blocks of the last RTL'


class Variant(models.TextChoices):
    BASELINE = 'baseline', 'Baseline'
    NET1 = 'net1', 'Net1'
    NET2 = 'net2', 'Net2'
    NET3 = 'net3', 'Net3'
    NET4 = 'net4', 'Net4'
    HDST = 'hdst', 'HDST'
