# square solution 0
x, y = map(int, input().split())
print(x * x)
