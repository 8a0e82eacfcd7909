from django.db import models
from django.db.models import Avg, Count, Max, Min, StdDev

from .trainers import Algorithm


class ResultRowQuerySet(models.QuerySet):
    def for_key(self, env, mixture, algorithm, divergence):
        return self.filter(env=env, mixture=mixture, algorithm=algorithm, divergence=divergence)

    def summary(self):
        """Per-configuration statistics of the final normalized return over seeds."""
        return (
            self.values('env', 'mixture', 'algorithm', 'divergence')
            .annotate(
                mean_norm_return=Avg('final_norm_return'),
                std_norm_return=StdDev('final_norm_return'),
                min_norm_return=Min('final_norm_return'),
                max_norm_return=Max('final_norm_return'),
                seeds=Count('id'),
            )
            .order_by('env', 'mixture', 'algorithm', 'divergence')
        )


class ResultRow(models.Model):
    """
    One finished training run: a seed of an (env, mixture, algorithm,
    divergence) configuration.
    """
    env = models.CharField(max_length=50, help_text="Environment name, e.g. grid4")
    mixture = models.CharField(max_length=20, help_text="Dataset mixture label")
    algorithm = models.CharField(max_length=20, choices=Algorithm.choices)
    divergence = models.CharField(max_length=200, help_text="Divergence or preset label")
    seed = models.IntegerField()

    final_return = models.FloatField(help_text="Exact p0-averaged return of the final policy")
    final_norm_return = models.FloatField(help_text="Min-max normalized final return")
    steps = models.IntegerField(default=0)

    metrics_path = models.CharField(max_length=500, blank=True)
    checkpoint_path = models.CharField(max_length=500, blank=True)
    created = models.DateTimeField(auto_now_add=True)

    objects = ResultRowQuerySet.as_manager()

    class Meta:
        ordering = ['env', 'mixture', 'algorithm', 'divergence', 'seed']
        constraints = [
            models.UniqueConstraint(
                fields=['env', 'mixture', 'algorithm', 'divergence', 'seed'],
                name='unique_result_per_seed',
            ),
        ]

    def __str__(self):
        return f"{self.env}/{self.mixture}/{self.algorithm}/{self.divergence} seed {self.seed}"
