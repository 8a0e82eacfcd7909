from rest_framework import viewsets
from rest_framework.decorators import action
from rest_framework.response import Response

from .models import ResultRow
from .serializers import ResultRowSerializer, ResultSummarySerializer

FILTER_FIELDS = ('env', 'mixture', 'algorithm', 'divergence', 'seed')


class ResultRowViewSet(viewsets.ReadOnlyModelViewSet):
    """
    Finished training runs, filterable by any part of their key.
    """
    serializer_class = ResultRowSerializer

    def get_queryset(self):
        queryset = ResultRow.objects.all()
        filters = {name: self.request.query_params[name]
                   for name in FILTER_FIELDS if name in self.request.query_params}
        return queryset.filter(**filters)

    @action(detail=False, methods=['get'])
    def summary(self, request):
        """
        Mean, population std, min and max of the normalized return per
        configuration.
        """
        rows = self.get_queryset().summary()
        return Response(ResultSummarySerializer(rows, many=True).data)
